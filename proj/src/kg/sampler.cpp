// SPDX-License-Identifier: Apache-2.0

#include "kclip/kg/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>
#include <unordered_set>

#include "kclip/errors.hpp"

namespace kclip::kg {

TripletForm TripletSample::form() const {
  const bool hi = head.modality == Modality::kImage;
  const bool ti = tail.modality == Modality::kImage;
  if (hi && ti) return TripletForm::kImageImage;
  if (hi) return TripletForm::kImageText;
  if (ti) return TripletForm::kTextImage;
  return TripletForm::kTextText;
}

EntityView choose_view(const KnowledgeGraph& graph, std::size_t entity, std::mt19937_64& rng) {
  const Entity& e = graph.entity(entity);
  EntityView view{entity, Modality::kText, 0};
  if (e.has(Modality::kImage) && e.has(Modality::kText)) {
    view.modality = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? Modality::kImage
                                                                       : Modality::kText;
  } else {
    view.modality = e.has(Modality::kImage) ? Modality::kImage : Modality::kText;
  }
  const std::size_t n = e.count(view.modality);
  view.description = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  return view;
}

TripletBatch sample_batch(const KnowledgeGraph& graph, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DataError("batch size must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pool(graph.triplets().size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::unordered_set<std::size_t> tails;
  TripletBatch batch;
  batch.seed = seed;
  std::size_t rejections = 0;
  while (batch.items.size() < n) {
    if (pool.empty() || rejections > kMaxRejections) {
      throw DataError("graph too small: cannot draw " + std::to_string(n) +
                      " triplets with distinct tails from " +
                      std::to_string(graph.triplets().size()) + " triplets");
    }
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
    const std::size_t index = pool[pick];
    pool[pick] = pool.back();
    pool.pop_back();
    const Triplet& t = graph.triplets()[index];
    if (!tails.insert(t.tail).second) {
      ++rejections;
      continue;
    }
    rejections = 0;
    batch.items.push_back(TripletSample{index, {}, t.relation, {}});
  }
  for (auto& item : batch.items) {
    const Triplet& t = graph.triplets()[item.triplet];
    item.head = choose_view(graph, t.head, rng);
    item.tail = choose_view(graph, t.tail, rng);
  }
  return batch;
}

std::vector<TripletBatch> partition_batches(const KnowledgeGraph& graph,
                                            std::span<const std::size_t> triplets,
                                            std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw DataError("batch size must be at least 1");
  struct Open {
    TripletBatch batch;
    std::set<std::size_t> tails;
    std::set<std::pair<std::size_t, std::size_t>> keys;
  };
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> edges;
  for (const Triplet& t : graph.triplets()) edges.emplace(t.head, t.relation, t.tail);
  // Another item's (head, relation) that also reaches this tail in the graph
  // would be a correct answer scored as a miss.
  auto conflicts = [&](const Open& o, const Triplet& t) {
    for (const auto& item : o.batch.items) {
      const Triplet& u = graph.triplets()[item.triplet];
      if (edges.contains({t.head, t.relation, u.tail}) || edges.contains({u.head, u.relation, t.tail})) {
        return true;
      }
    }
    return false;
  };
  std::vector<Open> open;
  for (std::size_t index : triplets) {
    if (index >= graph.triplets().size()) {
      throw DataError("triplet index " + std::to_string(index) + " out of range");
    }
    const Triplet& t = graph.triplets()[index];
    const auto key = std::make_pair(t.head, t.relation);
    auto it = std::find_if(open.begin(), open.end(), [&](const Open& o) {
      return o.batch.items.size() < batch_size && !o.tails.contains(t.tail) &&
             !o.keys.contains(key) && !conflicts(o, t);
    });
    if (it == open.end()) {
      open.emplace_back();
      it = std::prev(open.end());
    }
    it->tails.insert(t.tail);
    it->keys.insert(key);
    it->batch.items.push_back(TripletSample{index, {}, t.relation, {}});
  }
  std::mt19937_64 rng(seed);
  std::vector<TripletBatch> out;
  for (auto& o : open) {
    o.batch.seed = seed;
    for (auto& item : o.batch.items) {
      const Triplet& t = graph.triplets()[item.triplet];
      item.head = choose_view(graph, t.head, rng);
      item.tail = choose_view(graph, t.tail, rng);
    }
    out.push_back(std::move(o.batch));
  }
  return out;
}

}  // namespace kclip::kg
