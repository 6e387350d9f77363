// SPDX-License-Identifier: Apache-2.0

#include "kclip/model/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace kclip::model {

template <typename Real>
Linear<Real>::Linear(nn::ParameterStore<Real>& store, const std::string& name, std::size_t in,
                     std::size_t out, nn::ParamGroup group, std::mt19937_64& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  weight = &store.add(name + ".weight", nn::normal_tensor<Real>({in, out}, std, rng), group, true);
  bias = &store.add(name + ".bias", nn::Tensor<Real>({out}), group, false);
}

template <typename Real>
Var Linear<Real>::operator()(nn::Tape<Real>& tape, Var x) const {
  return tape.add(tape.matmul(x, tape.parameter(*weight)), tape.parameter(*bias));
}

template <typename Real>
LayerNorm<Real>::LayerNorm(nn::ParameterStore<Real>& store, const std::string& name,
                           std::size_t width, nn::ParamGroup group) {
  gain = &store.add(name + ".gain", nn::Tensor<Real>({width}, Real(1)), group, false);
  bias = &store.add(name + ".bias", nn::Tensor<Real>({width}), group, false);
}

template <typename Real>
Var LayerNorm<Real>::operator()(nn::Tape<Real>& tape, Var x) const {
  return tape.layer_norm(x, tape.parameter(*gain), tape.parameter(*bias));
}

template <typename Real>
Transformer<Real>::Transformer(nn::ParameterStore<Real>& store, const std::string& name,
                               const TransformerConfig& config, nn::ParamGroup group,
                               std::mt19937_64& rng)
    : config_(config) {
  if (config.heads == 0 || config.width % config.heads != 0) {
    throw std::invalid_argument(name + ": width " + std::to_string(config.width) +
                                " not divisible by " + std::to_string(config.heads) + " heads");
  }
  if (config.drop_path < 0 || config.drop_path >= 1) {
    throw std::invalid_argument(name + ": drop path rate must lie in [0, 1)");
  }
  const std::size_t w = config.width, hidden = config.width * config.mlp_ratio;
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = name + ".layer" + std::to_string(l);
    Block b;
    b.norm1 = LayerNorm<Real>(store, p + ".norm1", w, group);
    b.query = Linear<Real>(store, p + ".attn.query", w, w, group, rng);
    b.key = Linear<Real>(store, p + ".attn.key", w, w, group, rng);
    b.value = Linear<Real>(store, p + ".attn.value", w, w, group, rng);
    b.out = Linear<Real>(store, p + ".attn.out", w, w, group, rng);
    b.norm2 = LayerNorm<Real>(store, p + ".norm2", w, group);
    b.fc1 = Linear<Real>(store, p + ".mlp.fc1", w, hidden, group, rng);
    b.fc2 = Linear<Real>(store, p + ".mlp.fc2", hidden, w, group, rng);
    blocks_.push_back(b);
  }
  if (config.final_norm) final_norm_ = LayerNorm<Real>(store, name + ".final_norm", w, group);
}

template <typename Real>
Var Transformer<Real>::drop_path(nn::Tape<Real>& tape, Var branch, std::size_t seq_len,
                                 const ForwardContext& ctx) const {
  if (!ctx.training || config_.drop_path <= 0) return branch;
  if (ctx.rng == nullptr) throw std::invalid_argument("drop path in training needs an rng");
  const std::size_t sequences = tape.value(branch).rows() / seq_len;
  const Real keep = Real(1) - static_cast<Real>(config_.drop_path);
  std::bernoulli_distribution survive(static_cast<double>(keep));
  std::vector<Real> factors(sequences);
  for (auto& f : factors) f = survive(*ctx.rng) ? Real(1) / keep : Real(0);
  return tape.scale_rows(branch, factors, seq_len);
}

template <typename Real>
Var Transformer<Real>::forward(nn::Tape<Real>& tape, Var x, std::size_t seq_len,
                               std::span<const std::uint8_t> key_mask,
                               const ForwardContext& ctx) const {
  for (const Block& b : blocks_) {
    Var h = b.norm1(tape, x);
    Var attn = tape.attention(b.query(tape, h), b.key(tape, h), b.value(tape, h), seq_len,
                              config_.heads, key_mask);
    x = tape.add(x, drop_path(tape, b.out(tape, attn), seq_len, ctx));
    Var m = b.fc2(tape, tape.gelu(b.fc1(tape, b.norm2(tape, x))));
    x = tape.add(x, drop_path(tape, m, seq_len, ctx));
  }
  return config_.final_norm ? final_norm_(tape, x) : x;
}

template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template class Transformer<float>;
template class Transformer<double>;

}  // namespace kclip::model
