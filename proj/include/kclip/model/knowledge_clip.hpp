// SPDX-License-Identifier: Apache-2.0
//
// The full model: uni-modal encoders, fusion encoder, relation head,
// propagation weights and the shared temperature, over one parameter store.

#ifndef KCLIP_MODEL_KNOWLEDGE_CLIP_HPP_
#define KCLIP_MODEL_KNOWLEDGE_CLIP_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kclip/kg/graph.hpp"
#include "kclip/kg/sampler.hpp"
#include "kclip/model/encoders.hpp"
#include "kclip/model/fusion.hpp"
#include "kclip/objectives/losses.hpp"

namespace kclip::model {

struct ModelConfig {
  EncoderConfig encoder;
  FusionConfig fusion;
  std::size_t gnn_layers = 2;
  double tau_init = 0.07;

  bool operator==(const ModelConfig&) const = default;

  /// Fills the fusion fields derived from the encoder (input width and
  /// canonical entity slots) and checks consistency.
  ModelConfig& finalize();
};

/// Everything the objectives need from one triplet batch.
struct TripletForward {
  Var tails;            // Y(-,-,t_i)        [B, d_m]
  Var heads_relations;  // Y(h_i,r_i,-)      [B, d_m]
  Var relation_slots;   // R(h_i,-,t_i)      [B, d_m]
  Var relation_logits;  // MLP(R)            [B, |R|]
  Var nodes;            // Y(-,-,e) per subgraph entity, tails first
  /// Every graph triplet among the subgraph entities: the batch triplets
  /// first, then the rest in graph order.
  objectives::Subgraph subgraph;
  Var edge_relations;   // R(h,-,t) per subgraph edge
  std::size_t extra_edges = 0;
  std::vector<std::size_t> node_entities;  // graph index of each node
  Var heads_only;       // Y(h_i,-,-), symmetric variant only
  Var relations_tails;  // Y(-,r_i,t_i), symmetric variant only
};

template <typename Real>
class KnowledgeClip {
 public:
  KnowledgeClip(const ModelConfig& config, Vocabulary vocabulary, std::size_t relations,
                std::uint64_t seed);
  KnowledgeClip(const KnowledgeClip&) = delete;
  KnowledgeClip& operator=(const KnowledgeClip&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  const Tokenizer& tokenizer() const noexcept { return tokenizer_; }
  std::size_t relations() const noexcept { return relation_head_.relations(); }
  nn::ParameterStore<Real>& parameters() noexcept { return store_; }
  const nn::ParameterStore<Real>& parameters() const noexcept { return store_; }

  Var log_tau(nn::Tape<Real>& tape) const { return tape.parameter(*log_tau_); }
  Real tau() const;

  /// Entity feature maps padded to the canonical slot count,
  /// [views.size() * slots, d_o]; image and text views batched separately.
  EntityBlock encode_entities(nn::Tape<Real>& tape, const kg::KnowledgeGraph& graph,
                              std::span<const kg::EntityView> views,
                              const ForwardContext& ctx) const;
  /// Pooled relation-name features [ids.size(), d_o].
  Var encode_relations(nn::Tape<Real>& tape, const kg::KnowledgeGraph& graph,
                       std::span<const std::size_t> ids, const ForwardContext& ctx) const;

  /// Pooled global features for retrieval and distillation.
  Var pooled_images(nn::Tape<Real>& tape, std::span<const kg::Image* const> images,
                    const ForwardContext& ctx) const;
  Var pooled_texts(nn::Tape<Real>& tape, std::span<const std::string> texts,
                   const ForwardContext& ctx) const;

  /// All fusion passes for a batch in a single fused call.
  TripletForward forward(nn::Tape<Real>& tape, const kg::KnowledgeGraph& graph,
                         std::span<const kg::TripletSample> batch, const ForwardContext& ctx,
                         bool symmetric = false) const;

  /// GNN propagation over the batch subgraph of a forward().
  Var propagate(nn::Tape<Real>& tape, const TripletForward& fw) const;

  const ImageEncoder<Real>& image_encoder() const noexcept { return image_; }
  const TextEncoder<Real>& text_encoder() const noexcept { return text_; }
  const FusionEncoder<Real>& fusion() const noexcept { return fusion_; }
  const objectives::RelationHead<Real>& relation_head() const noexcept { return relation_head_; }

 private:
  ModelConfig config_;
  Tokenizer tokenizer_;
  nn::ParameterStore<Real> store_;
  std::mt19937_64 init_rng_;
  ImageEncoder<Real> image_;
  TextEncoder<Real> text_;
  FusionEncoder<Real> fusion_;
  objectives::RelationHead<Real> relation_head_;
  std::vector<nn::Parameter<Real>*> gnn_weights_;
  nn::Parameter<Real>* log_tau_ = nullptr;
};

/// Vocabulary over every entity text and relation name of the graph plus
/// any extra captions, within the configured capacity.
Vocabulary build_vocabulary(const kg::KnowledgeGraph& graph, std::span<const std::string> extra,
                            std::size_t capacity);

extern template class KnowledgeClip<float>;
extern template class KnowledgeClip<double>;

}  // namespace kclip::model

#endif  // KCLIP_MODEL_KNOWLEDGE_CLIP_HPP_
