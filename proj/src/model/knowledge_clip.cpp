// SPDX-License-Identifier: Apache-2.0

#include "kclip/model/knowledge_clip.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "kclip/errors.hpp"

namespace kclip::model {

ModelConfig& ModelConfig::finalize() {
  encoder.validate();
  fusion.input_dim = encoder.output_dim;
  fusion.entity_slots = std::max(encoder.image_tokens(), encoder.text_length);
  if (fusion.heads == 0 || fusion.width % fusion.heads != 0) {
    throw std::invalid_argument("fusion width not divisible by heads");
  }
  if (gnn_layers == 0) throw std::invalid_argument("at least one propagation layer is required");
  if (!(tau_init > 0)) throw std::invalid_argument("temperature must be positive");
  return *this;
}

namespace {

Vocabulary checked(Vocabulary v, std::size_t capacity) {
  if (v.size() > capacity) {
    throw std::invalid_argument("vocabulary of " + std::to_string(v.size()) +
                                " tokens exceeds the embedding table of " +
                                std::to_string(capacity));
  }
  return v;
}

}  // namespace

Vocabulary build_vocabulary(const kg::KnowledgeGraph& graph, std::span<const std::string> extra,
                            std::size_t capacity) {
  std::vector<std::string> corpus;
  for (const auto& e : graph.entities()) corpus.insert(corpus.end(), e.texts.begin(), e.texts.end());
  for (const auto& r : graph.relations()) corpus.push_back(r.name);
  corpus.insert(corpus.end(), extra.begin(), extra.end());
  return Vocabulary::build(corpus, capacity);
}

template <typename Real>
KnowledgeClip<Real>::KnowledgeClip(const ModelConfig& config, Vocabulary vocabulary,
                                   std::size_t relations, std::uint64_t seed)
    : config_(ModelConfig(config).finalize()),
      tokenizer_(checked(std::move(vocabulary), config_.encoder.vocab_size),
                 config_.encoder.text_length),
      init_rng_(seed),
      image_(store_, config_.encoder, init_rng_),
      text_(store_, config_.encoder, init_rng_),
      fusion_(store_, config_.fusion, init_rng_),
      relation_head_(store_, config_.fusion.width, relations, init_rng_) {
  const std::size_t d = config_.fusion.width;
  for (std::size_t l = 0; l < config_.gnn_layers; ++l) {
    gnn_weights_.push_back(&store_.add(
        "gnn.weight" + std::to_string(l),
        nn::normal_tensor<Real>({d, 1}, 1.0 / std::sqrt(static_cast<double>(d)), init_rng_),
        nn::ParamGroup::kFusion, true));
  }
  log_tau_ = &store_.add("log_tau",
                         nn::Tensor<Real>::scalar(static_cast<Real>(std::log(config_.tau_init))),
                         nn::ParamGroup::kFusion, false);
}

template <typename Real>
Real KnowledgeClip<Real>::tau() const {
  return std::exp(log_tau_->value.item());
}

template <typename Real>
EntityBlock KnowledgeClip<Real>::encode_entities(nn::Tape<Real>& tape,
                                                 const kg::KnowledgeGraph& graph,
                                                 std::span<const kg::EntityView> views,
                                                 const ForwardContext& ctx) const {
  if (views.empty()) throw std::invalid_argument("encode_entities: no views");
  std::vector<const kg::Image*> images;
  std::vector<TokenSequence> texts;
  std::vector<std::size_t> slot_of(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const auto& e = graph.entity(v.entity);
    if (v.modality == kg::Modality::kImage) {
      slot_of[i] = images.size();
      images.push_back(&e.images.at(v.description));
    } else {
      slot_of[i] = texts.size();
      texts.push_back(tokenizer_.tokenize(e.texts.at(v.description)));
    }
  }
  const std::size_t S = config_.fusion.entity_slots, li = image_.tokens(), lt = text_.tokens();
  std::vector<Var> parts;
  if (!images.empty()) parts.push_back(image_.encode(tape, images, ctx));
  if (!texts.empty()) parts.push_back(text_.encode(tape, texts, ctx));
  const std::size_t text_base = images.size() * li;
  const std::size_t zero_row = text_base + texts.size() * lt;
  const bool padded = li < S || lt < S;
  if (padded) parts.push_back(tape.constant(nn::Tensor<Real>::matrix(1, config_.encoder.output_dim)));
  Var table = parts.size() == 1 ? parts[0] : tape.concat_rows(parts);

  std::vector<std::size_t> index;
  index.reserve(views.size() * S);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const bool image = views[i].modality == kg::Modality::kImage;
    const std::size_t len = image ? li : lt;
    const std::size_t base = image ? slot_of[i] * li : text_base + slot_of[i] * lt;
    for (std::size_t s = 0; s < S; ++s) index.push_back(s < len ? base + s : zero_row);
  }
  return EntityBlock{tape.gather_rows(table, index), S};
}

template <typename Real>
Var KnowledgeClip<Real>::encode_relations(nn::Tape<Real>& tape, const kg::KnowledgeGraph& graph,
                                          std::span<const std::size_t> ids,
                                          const ForwardContext& ctx) const {
  std::vector<TokenSequence> names;
  names.reserve(ids.size());
  for (std::size_t id : ids) names.push_back(tokenizer_.tokenize(graph.relation(id).name));
  return text_.encode_pooled(tape, names, ctx);
}

template <typename Real>
Var KnowledgeClip<Real>::pooled_images(nn::Tape<Real>& tape,
                                       std::span<const kg::Image* const> images,
                                       const ForwardContext& ctx) const {
  return tape.mean_rows(image_.encode(tape, images, ctx), image_.tokens());
}

template <typename Real>
Var KnowledgeClip<Real>::pooled_texts(nn::Tape<Real>& tape, std::span<const std::string> texts,
                                      const ForwardContext& ctx) const {
  std::vector<TokenSequence> seqs;
  seqs.reserve(texts.size());
  for (const auto& t : texts) seqs.push_back(tokenizer_.tokenize(t));
  return tape.mean_rows(text_.encode(tape, seqs, ctx), text_.tokens(), concat_masks(seqs));
}

template <typename Real>
TripletForward KnowledgeClip<Real>::forward(nn::Tape<Real>& tape, const kg::KnowledgeGraph& graph,
                                            std::span<const kg::TripletSample> batch,
                                            const ForwardContext& ctx, bool symmetric) const {
  const std::size_t B = batch.size();
  if (B == 0) throw std::invalid_argument("forward: empty batch");
  TripletForward fw;

  // Subgraph nodes: every tail, then heads that are not also tails.
  std::unordered_map<std::size_t, std::size_t> node_of;
  std::vector<kg::EntityView> views;
  views.reserve(3 * B);
  for (const auto& s : batch) views.push_back(s.head);
  for (const auto& s : batch) {
    if (!node_of.emplace(s.tail.entity, fw.node_entities.size()).second) {
      throw DataError("forward: batch repeats tail entity '" + graph.entity(s.tail.entity).id + "'");
    }
    fw.node_entities.push_back(s.tail.entity);
    views.push_back(s.tail);
  }
  std::size_t extra = 0;
  for (const auto& s : batch) {
    if (node_of.emplace(s.head.entity, fw.node_entities.size()).second) {
      fw.node_entities.push_back(s.head.entity);
      views.push_back(s.head);
      ++extra;
    }
  }
  fw.subgraph.entities = fw.node_entities.size();
  for (const auto& s : batch) {
    fw.subgraph.heads.push_back(node_of.at(s.head.entity));
    fw.subgraph.tails.push_back(node_of.at(s.tail.entity));
  }
  // Remaining graph triplets between subgraph entities. Their relation
  // slots come from extra (h,-,t) passes over the nodes' own views.
  std::unordered_set<std::size_t> in_batch;
  for (const auto& s : batch) in_batch.insert(s.triplet);
  std::vector<std::size_t> extra_rows_h, extra_rows_t;
  const auto& triplets = graph.triplets();
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    if (in_batch.contains(i)) continue;
    auto h = node_of.find(triplets[i].head), t = node_of.find(triplets[i].tail);
    if (h == node_of.end() || t == node_of.end()) continue;
    fw.subgraph.heads.push_back(h->second);
    fw.subgraph.tails.push_back(t->second);
    extra_rows_h.push_back(h->second);
    extra_rows_t.push_back(t->second);
  }
  fw.extra_edges = extra_rows_h.size();

  std::vector<std::size_t> relation_ids;
  for (const auto& s : batch) relation_ids.push_back(s.relation);
  const EntityBlock all = encode_entities(tape, graph, views, ctx);
  const std::size_t S = all.length;
  const EntityBlock heads{tape.slice_rows(all.features, 0, B * S), S};
  const EntityBlock tails{tape.slice_rows(all.features, B * S, B * S), S};
  Var relations = encode_relations(tape, graph, relation_ids, ctx);

  std::vector<FusionInput> passes{
      fusion_.assemble(tape, heads, relations, std::nullopt, B),
      fusion_.assemble(tape, std::nullopt, std::nullopt, tails, B),
      fusion_.assemble(tape, heads, std::nullopt, tails, B),
  };
  if (extra > 0) {
    const EntityBlock rest{tape.slice_rows(all.features, 2 * B * S, extra * S), S};
    passes.push_back(fusion_.assemble(tape, std::nullopt, std::nullopt, rest, extra));
  }
  if (symmetric) {
    passes.push_back(fusion_.assemble(tape, heads, std::nullopt, std::nullopt, B));
    passes.push_back(fusion_.assemble(tape, std::nullopt, relations, tails, B));
  }
  if (fw.extra_edges > 0) {
    // Node n's map starts at row (B + n) * S of the encoded views.
    auto block_of = [&](const std::vector<std::size_t>& nodes) {
      std::vector<std::size_t> rows;
      rows.reserve(nodes.size() * S);
      for (std::size_t n : nodes)
        for (std::size_t k = 0; k < S; ++k) rows.push_back((B + n) * S + k);
      return EntityBlock{tape.gather_rows(all.features, rows), S};
    };
    passes.push_back(fusion_.assemble(tape, block_of(extra_rows_h), std::nullopt,
                                      block_of(extra_rows_t), fw.extra_edges));
  }
  FusionInput joint = passes[0];
  std::vector<Var> sequences;
  joint.batch = 0;
  for (const auto& p : passes) {
    sequences.push_back(p.sequence);
    joint.batch += p.batch;
  }
  joint.sequence = tape.concat_rows(sequences);
  const FusionOutput out = fusion_.fuse(tape, joint, ctx);

  std::size_t row = 0;
  auto take = [&](Var v, std::size_t n) { return tape.slice_rows(v, row, n); };
  fw.heads_relations = take(out.y, B);
  row += B;
  fw.tails = take(out.y, B);
  row += B;
  fw.relation_slots = take(out.relation, B);
  row += B;
  fw.nodes = fw.tails;
  if (extra > 0) {
    const Var ys[] = {fw.tails, take(out.y, extra)};
    fw.nodes = tape.concat_rows(ys);
    row += extra;
  }
  if (symmetric) {
    fw.heads_only = take(out.y, B);
    row += B;
    fw.relations_tails = take(out.y, B);
    row += B;
  }
  fw.edge_relations = fw.relation_slots;
  if (fw.extra_edges > 0) {
    const Var rs[] = {fw.relation_slots, take(out.relation, fw.extra_edges)};
    fw.edge_relations = tape.concat_rows(rs);
  }
  fw.relation_logits = relation_head_(tape, fw.relation_slots);
  return fw;
}

template <typename Real>
Var KnowledgeClip<Real>::propagate(nn::Tape<Real>& tape, const TripletForward& fw) const {
  std::vector<Var> ws;
  for (auto* w : gnn_weights_) ws.push_back(tape.parameter(*w));
  return objectives::gnn_propagate(tape, fw.subgraph, fw.nodes, fw.edge_relations, ws);
}

template class KnowledgeClip<float>;
template class KnowledgeClip<double>;

}  // namespace kclip::model
