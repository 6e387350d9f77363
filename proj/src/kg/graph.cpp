// SPDX-License-Identifier: Apache-2.0

#include "kclip/kg/graph.hpp"

#include <algorithm>
#include <cctype>

#include "kclip/errors.hpp"

namespace kclip::kg {

std::string_view modality_name(Modality m) { return m == Modality::kImage ? "image" : "text"; }

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::size_t KnowledgeGraph::add_entity(Entity entity) {
  if (entity.id.empty()) throw DataError("entity with empty id");
  if (entity_index_.contains(entity.id)) throw DataError("duplicate entity id '" + entity.id + "'");
  if (entity.texts.empty() && entity.images.empty()) {
    throw DataError("entity '" + entity.id + "' has no descriptions");
  }
  for (const auto& t : entity.texts) {
    if (blank(t)) throw DataError("entity '" + entity.id + "' has an empty text description");
  }
  for (const auto& im : entity.images) {
    if (im.pixels.size() != static_cast<std::size_t>(im.height) * im.width * im.channels ||
        im.pixels.empty()) {
      throw DataError("entity '" + entity.id + "' has a malformed image");
    }
  }
  const std::size_t index = entities_.size();
  entity_index_.emplace(entity.id, index);
  entities_.push_back(std::move(entity));
  incoming_.emplace_back();
  return index;
}

std::size_t KnowledgeGraph::add_relation(std::string name) {
  if (blank(name)) throw DataError("relation with empty name");
  if (relation_index_.contains(name)) throw DataError("duplicate relation name '" + name + "'");
  const std::size_t id = relations_.size();
  relation_index_.emplace(name, id);
  relations_.push_back(Relation{id, std::move(name)});
  return id;
}

std::size_t KnowledgeGraph::add_triplet(Triplet triplet) {
  if (triplet.head >= entities_.size() || triplet.tail >= entities_.size()) {
    throw DataError("triplet references entity index out of range");
  }
  if (triplet.relation >= relations_.size()) {
    throw DataError("triplet references unknown relation id " + std::to_string(triplet.relation));
  }
  const std::size_t index = triplets_.size();
  triplets_.push_back(triplet);
  incoming_[triplet.tail].push_back(index);
  return index;
}

std::optional<std::size_t> KnowledgeGraph::find_entity(std::string_view id) const {
  if (auto it = entity_index_.find(std::string(id)); it != entity_index_.end()) return it->second;
  return std::nullopt;
}

std::optional<std::size_t> KnowledgeGraph::find_relation(std::string_view name) const {
  if (auto it = relation_index_.find(std::string(name)); it != relation_index_.end()) {
    return it->second;
  }
  return std::nullopt;
}

std::span<const std::size_t> KnowledgeGraph::incoming(std::size_t entity) const {
  return incoming_.at(entity);
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& other) const {
  return entities_ == other.entities_ && relations_ == other.relations_ &&
         triplets_ == other.triplets_;
}

std::pair<std::size_t, std::size_t> ensure_pair_relations(KnowledgeGraph& graph) {
  auto image_of = graph.find_relation(kImageOfRelation);
  auto caption_of = graph.find_relation(kCaptionOfRelation);
  if (!image_of) image_of = graph.add_relation(std::string(kImageOfRelation));
  if (!caption_of) caption_of = graph.add_relation(std::string(kCaptionOfRelation));
  return {*image_of, *caption_of};
}

PairConversion convert_pair(KnowledgeGraph& graph, Image image, std::string caption) {
  if (blank(caption)) throw DataError("image-text pair with empty caption");
  const auto [image_of, caption_of] = ensure_pair_relations(graph);
  std::size_t serial = graph.entities().size();
  auto free_id = [&](std::string_view suffix) {
    for (;; ++serial) {
      std::string id = "pair" + std::to_string(serial) + "/" + std::string(suffix);
      if (!graph.find_entity(id)) return id;
    }
  };
  PairConversion out;
  Entity img;
  img.id = free_id("image");
  img.images.push_back(std::move(image));
  out.image_entity = graph.add_entity(std::move(img));
  Entity txt;
  txt.id = free_id("text");
  txt.texts.push_back(std::move(caption));
  out.text_entity = graph.add_entity(std::move(txt));
  out.triplets.push_back(Triplet{out.image_entity, image_of, out.text_entity});
  out.triplets.push_back(Triplet{out.text_entity, caption_of, out.image_entity});
  for (const auto& t : out.triplets) graph.add_triplet(t);
  return out;
}

}  // namespace kclip::kg
