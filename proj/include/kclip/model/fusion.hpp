// SPDX-License-Identifier: Apache-2.0
//
// Multi-modal fusion over triplet sequences
//
//   [<head>, h + PE_h (l_h slots), r + PE_r (1 slot), t + PE_t (l_t slots)]
//
// Absent (masked) elements occupy their slots as exact zero vectors with no
// element encoding. Y is the output at the head token, R the output at the
// relation slot (index 1 + l_h).

#ifndef KCLIP_MODEL_FUSION_HPP_
#define KCLIP_MODEL_FUSION_HPP_

#include <cstddef>
#include <optional>
#include <random>

#include "kclip/model/transformer.hpp"

namespace kclip::model {

struct FusionConfig {
  std::size_t layers = 2;
  std::size_t width = 128;  // d_m
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  double drop_path = 0.1;
  std::size_t input_dim = 64;     // d_o
  std::size_t entity_slots = 16;  // canonical l_h = l_t
  bool final_norm = true;

  bool operator==(const FusionConfig&) const = default;
  std::size_t sequence_length() const { return 2 + 2 * entity_slots; }
  std::size_t relation_index() const { return 1 + entity_slots; }
  TransformerConfig transformer() const {
    return {layers, width, heads, mlp_ratio, drop_path, final_norm};
  }
};

/// Entity features for a batch: [batch * length, d_o]. Maps shorter than
/// the canonical slot count are zero-padded.
struct EntityBlock {
  Var features;
  std::size_t length = 0;
};

struct FusionInput {
  Var sequence;  // [batch * sequence_length, d_m]
  std::size_t batch = 0;
  std::size_t head_slots = 0;
  std::size_t tail_slots = 0;
  bool head_present = false;
  bool relation_present = false;
  bool tail_present = false;

  std::size_t length() const { return 2 + head_slots + tail_slots; }
  std::size_t relation_index() const { return 1 + head_slots; }
};

/// Elements set here are replaced by zero blocks whatever their content.
struct ElementMask {
  bool head = false;
  bool relation = false;
  bool tail = false;
};

struct FusionOutput {
  Var y;         // [batch, d_m]
  Var relation;  // [batch, d_m]
  Var sequence;  // [batch * length, d_m]
};

template <typename Real>
class FusionEncoder {
 public:
  FusionEncoder(nn::ParameterStore<Real>& store, const FusionConfig& config, std::mt19937_64& rng);

  /// Throws std::invalid_argument when all three elements are absent or
  /// the batch sizes disagree.
  FusionInput assemble(nn::Tape<Real>& tape, const std::optional<EntityBlock>& head,
                       std::optional<Var> relation, const std::optional<EntityBlock>& tail,
                       std::size_t batch) const;

  /// assemble() with every element supplied and the masked ones dropped.
  FusionInput assemble_masked(nn::Tape<Real>& tape, const EntityBlock& head, Var relation,
                              const EntityBlock& tail, ElementMask mask, std::size_t batch) const {
    return assemble(tape, mask.head ? std::nullopt : std::optional<EntityBlock>(head),
                    mask.relation ? std::nullopt : std::optional<Var>(relation),
                    mask.tail ? std::nullopt : std::optional<EntityBlock>(tail), batch);
  }

  FusionOutput fuse(nn::Tape<Real>& tape, const FusionInput& input,
                    const ForwardContext& ctx) const;

  const FusionConfig& config() const noexcept { return config_; }

 private:
  Var project(nn::Tape<Real>& tape, Var features, nn::Parameter<Real>* encoding) const;

  FusionConfig config_;
  Linear<Real> input_projection_;
  nn::Parameter<Real>* head_token_ = nullptr;
  nn::Parameter<Real>* head_encoding_ = nullptr;
  nn::Parameter<Real>* relation_encoding_ = nullptr;
  nn::Parameter<Real>* tail_encoding_ = nullptr;
  Transformer<Real> transformer_;
};

extern template class FusionEncoder<float>;
extern template class FusionEncoder<double>;

}  // namespace kclip::model

#endif  // KCLIP_MODEL_FUSION_HPP_
