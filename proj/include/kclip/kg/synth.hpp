// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic knowledge graphs and image-text pairs.
//
// Every entity carries a latent class (index mod the class count). Its
// text names the class and the entity; its image is a stripe pattern whose
// colour encodes the class and whose orientation, frequency and phase are
// keyed to the entity index. The relation of a triplet is a fixed function
// of the head and tail classes, so relations are learnable from content.

#ifndef KCLIP_KG_SYNTH_HPP_
#define KCLIP_KG_SYNTH_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kclip/kg/graph.hpp"
#include "kclip/kg/jsonl.hpp"

namespace kclip::kg {

/// Relative weights of the three entity kinds.
struct ModalityMix {
  double text_only = 0.0;
  double image_only = 0.0;
  double both = 1.0;
};

struct SynthSpec {
  std::size_t entities = 32;
  std::size_t relations = 4;
  std::size_t triplets = 128;
  ModalityMix mix;
  std::uint64_t seed = 7;
  std::uint32_t image_size = 32;
  std::uint32_t channels = 3;
};

std::size_t synth_class_count(std::size_t relations);
std::size_t synth_latent_class(std::size_t entity, std::size_t relations);
std::size_t synth_relation(std::size_t head_class, std::size_t tail_class, std::size_t relations);

/// Throws DataError for infeasible specs (no relations, more triplets than
/// ordered entity pairs, all-zero mix, ...).
KnowledgeGraph synth_graph(const SynthSpec& spec);

/// Pairs whose captions name the colour, orientation and frequency of the
/// rendered stripe pattern. The first 64 pairs have distinct captions.
std::vector<ImageTextPair> synth_pairs(std::size_t n, std::uint64_t seed,
                                       std::uint32_t image_size = 32, std::uint32_t channels = 3);

/// Stripe pattern in [0, 1]: colour-weighted sinusoid along `angle`.
Image render_stripes(std::uint32_t size, std::uint32_t channels, const float (&colour)[3],
                     double angle, double frequency, double phase);

}  // namespace kclip::kg

#endif  // KCLIP_KG_SYNTH_HPP_
