// SPDX-License-Identifier: Apache-2.0
//
// Knowledge-graph data model: modality-tagged entities, relation labels and
// directed relation triplets, plus the image-text pair conversion used for
// continuous learning.

#ifndef KCLIP_KG_GRAPH_HPP_
#define KCLIP_KG_GRAPH_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kclip/kg/image.hpp"

namespace kclip::kg {

enum class Modality : std::uint8_t { kImage = 0, kText = 1 };

std::string_view modality_name(Modality m);

struct Entity {
  std::string id;
  std::vector<std::string> texts;
  std::vector<Image> images;

  bool has(Modality m) const { return m == Modality::kText ? !texts.empty() : !images.empty(); }
  std::size_t count(Modality m) const {
    return m == Modality::kText ? texts.size() : images.size();
  }
  bool operator==(const Entity&) const = default;
};

struct Relation {
  std::size_t id = 0;
  std::string name;
  bool operator==(const Relation&) const = default;
};

/// Directed edge between entity indices.
struct Triplet {
  std::size_t head = 0;
  std::size_t relation = 0;
  std::size_t tail = 0;
  bool operator==(const Triplet&) const = default;
};

inline constexpr std::string_view kImageOfRelation = "image of";
inline constexpr std::string_view kCaptionOfRelation = "caption of";

class KnowledgeGraph {
 public:
  /// Throws DataError on duplicate id or an entity without descriptions.
  std::size_t add_entity(Entity entity);
  /// Appends a relation with the next dense id. Throws on duplicate name.
  std::size_t add_relation(std::string name);
  /// Throws DataError on out-of-range indices.
  std::size_t add_triplet(Triplet triplet);

  std::span<const Entity> entities() const noexcept { return entities_; }
  std::span<const Relation> relations() const noexcept { return relations_; }
  std::span<const Triplet> triplets() const noexcept { return triplets_; }
  const Entity& entity(std::size_t index) const { return entities_.at(index); }
  const Relation& relation(std::size_t id) const { return relations_.at(id); }

  std::optional<std::size_t> find_entity(std::string_view id) const;
  std::optional<std::size_t> find_relation(std::string_view name) const;

  /// Indices of triplets whose tail is the given entity, in triplet order.
  std::span<const std::size_t> incoming(std::size_t entity) const;

  /// Equality of content (entities, relations, triplets).
  bool operator==(const KnowledgeGraph& other) const;

 private:
  std::vector<Entity> entities_;
  std::vector<Relation> relations_;
  std::vector<Triplet> triplets_;
  std::vector<std::vector<std::size_t>> incoming_;
  std::unordered_map<std::string, std::size_t> entity_index_;
  std::unordered_map<std::string, std::size_t> relation_index_;
};

struct PairConversion {
  std::size_t image_entity = 0;
  std::size_t text_entity = 0;
  std::vector<Triplet> triplets;  // (image, image of, text), (text, caption of, image)
};

/// Adds "image of" and "caption of" after the current relations if absent
/// and returns their ids.
std::pair<std::size_t, std::size_t> ensure_pair_relations(KnowledgeGraph& graph);

/// Converts an image-text pair into two fresh entities and two triplets.
/// Identical captions still produce distinct entities. Throws DataError on
/// an empty caption.
PairConversion convert_pair(KnowledgeGraph& graph, Image image, std::string caption);

}  // namespace kclip::kg

#endif  // KCLIP_KG_GRAPH_HPP_
