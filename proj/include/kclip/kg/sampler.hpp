// SPDX-License-Identifier: Apache-2.0
//
// Deterministic triplet batch sampling with per-occurrence description
// choice.

#ifndef KCLIP_KG_SAMPLER_HPP_
#define KCLIP_KG_SAMPLER_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "kclip/kg/graph.hpp"

namespace kclip::kg {

/// One rendering of an entity: which modality and which description.
struct EntityView {
  std::size_t entity = 0;
  Modality modality = Modality::kText;
  std::size_t description = 0;
  bool operator==(const EntityView&) const = default;
};

enum class TripletForm : std::uint8_t { kImageImage, kImageText, kTextText, kTextImage };

struct TripletSample {
  std::size_t triplet = 0;  // index into graph.triplets()
  EntityView head;
  std::size_t relation = 0;
  EntityView tail;

  TripletForm form() const;
  bool operator==(const TripletSample&) const = default;
};

struct TripletBatch {
  std::vector<TripletSample> items;
  std::uint64_t seed = 0;
  bool operator==(const TripletBatch&) const = default;
};

/// Uniform modality among those the entity has, then a uniform description
/// within that modality.
EntityView choose_view(const KnowledgeGraph& graph, std::size_t entity, std::mt19937_64& rng);

/// Bounded rejections per batch slot before sample_batch gives up.
inline constexpr std::size_t kMaxRejections = 100;

/// Draws n triplets uniformly without replacement, rejecting candidates
/// whose tail is already in the batch. Throws DataError when the graph
/// cannot supply n distinct tails within the rejection bound.
TripletBatch sample_batch(const KnowledgeGraph& graph, std::size_t n, std::uint64_t seed);

/// Splits the given triplets into evaluation batches of at most
/// `batch_size` in which tails and (head, relation) keys are pairwise
/// distinct and no item's (head, relation) forms a graph triplet with
/// another item's tail (filtered retrieval). Views are drawn from `seed`.
/// Deterministic.
std::vector<TripletBatch> partition_batches(const KnowledgeGraph& graph,
                                            std::span<const std::size_t> triplets,
                                            std::size_t batch_size, std::uint64_t seed);

}  // namespace kclip::kg

#endif  // KCLIP_KG_SAMPLER_HPP_
