// SPDX-License-Identifier: Apache-2.0

#include "kclip/model/fusion.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace kclip::model {

template <typename Real>
FusionEncoder<Real>::FusionEncoder(nn::ParameterStore<Real>& store, const FusionConfig& config,
                                   std::mt19937_64& rng)
    : config_(config),
      input_projection_(store, "fusion.input_projection", config.input_dim, config.width,
                        nn::ParamGroup::kFusion, rng),
      head_token_(&store.add("fusion.head_token",
                             nn::normal_tensor<Real>({1, config.width}, 0.02, rng),
                             nn::ParamGroup::kFusion, false)),
      head_encoding_(&store.add("fusion.encoding.head",
                                nn::normal_tensor<Real>({1, config.width}, 0.02, rng),
                                nn::ParamGroup::kFusion, false)),
      relation_encoding_(&store.add("fusion.encoding.relation",
                                    nn::normal_tensor<Real>({1, config.width}, 0.02, rng),
                                    nn::ParamGroup::kFusion, false)),
      tail_encoding_(&store.add("fusion.encoding.tail",
                                nn::normal_tensor<Real>({1, config.width}, 0.02, rng),
                                nn::ParamGroup::kFusion, false)),
      transformer_(store, "fusion.transformer", config.transformer(), nn::ParamGroup::kFusion,
                   rng) {}

template <typename Real>
Var FusionEncoder<Real>::project(nn::Tape<Real>& tape, Var features,
                                 nn::Parameter<Real>* encoding) const {
  return tape.add(input_projection_(tape, features), tape.parameter(*encoding));
}

template <typename Real>
FusionInput FusionEncoder<Real>::assemble(nn::Tape<Real>& tape,
                                          const std::optional<EntityBlock>& head,
                                          std::optional<Var> relation,
                                          const std::optional<EntityBlock>& tail,
                                          std::size_t batch) const {
  if (!head && !relation && !tail) {
    throw std::invalid_argument("assemble: at least one triplet element must be present");
  }
  if (batch == 0) throw std::invalid_argument("assemble: empty batch");
  const std::size_t slots = config_.entity_slots;
  auto check_block = [&](const EntityBlock& b, const char* what) {
    if (b.length == 0 || b.length > slots || tape.value(b.features).rows() != batch * b.length) {
      throw nn::ShapeError(std::string("assemble: ") + what + " block of " +
                           nn::shape_string(tape.shape(b.features)) + " for batch " +
                           std::to_string(batch) + " x " + std::to_string(b.length) + " slots");
    }
  };
  if (head) check_block(*head, "head");
  if (tail) check_block(*tail, "tail");
  if (relation && tape.value(*relation).rows() != batch) {
    throw nn::ShapeError("assemble: relation rows " + nn::shape_string(tape.shape(*relation)) +
                         " for batch " + std::to_string(batch));
  }

  // Source rows: 0 = head token, 1 = zero, then projected head, relation
  // and tail features. The sequence is a single gather from this table.
  std::vector<Var> parts{tape.parameter(*head_token_),
                         tape.constant(nn::Tensor<Real>::matrix(1, config_.width))};
  std::size_t offset = 2, head_base = 0, rel_base = 0, tail_base = 0;
  if (head) {
    head_base = offset;
    parts.push_back(project(tape, head->features, head_encoding_));
    offset += batch * head->length;
  }
  if (relation) {
    rel_base = offset;
    parts.push_back(project(tape, *relation, relation_encoding_));
    offset += batch;
  }
  if (tail) {
    tail_base = offset;
    parts.push_back(project(tape, tail->features, tail_encoding_));
  }
  Var table = tape.concat_rows(parts);

  std::vector<std::size_t> index;
  index.reserve(batch * config_.sequence_length());
  for (std::size_t b = 0; b < batch; ++b) {
    index.push_back(0);
    for (std::size_t s = 0; s < slots; ++s)
      index.push_back(head && s < head->length ? head_base + b * head->length + s : 1);
    index.push_back(relation ? rel_base + b : 1);
    for (std::size_t s = 0; s < slots; ++s)
      index.push_back(tail && s < tail->length ? tail_base + b * tail->length + s : 1);
  }
  FusionInput in;
  in.sequence = tape.gather_rows(table, index);
  in.batch = batch;
  in.head_slots = slots;
  in.tail_slots = slots;
  in.head_present = head.has_value();
  in.relation_present = relation.has_value();
  in.tail_present = tail.has_value();
  return in;
}

template <typename Real>
FusionOutput FusionEncoder<Real>::fuse(nn::Tape<Real>& tape, const FusionInput& input,
                                       const ForwardContext& ctx) const {
  const std::size_t L = input.length();
  Var out = transformer_.forward(tape, input.sequence, L, {}, ctx);
  std::vector<std::size_t> y_rows, r_rows;
  for (std::size_t b = 0; b < input.batch; ++b) {
    y_rows.push_back(b * L);
    r_rows.push_back(b * L + input.relation_index());
  }
  return FusionOutput{tape.gather_rows(out, y_rows), tape.gather_rows(out, r_rows), out};
}

template class FusionEncoder<float>;
template class FusionEncoder<double>;

}  // namespace kclip::model
