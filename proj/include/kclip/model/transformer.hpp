// SPDX-License-Identifier: Apache-2.0
//
// Pre-norm Transformer encoder stack shared by the image, text and fusion
// encoders.

#ifndef KCLIP_MODEL_TRANSFORMER_HPP_
#define KCLIP_MODEL_TRANSFORMER_HPP_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kclip/nn/parameter.hpp"
#include "kclip/nn/tape.hpp"

namespace kclip::model {

using nn::Var;

/// Training-time switches for one forward pass.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // required when training with drop path

  static ForwardContext eval() { return {}; }
};

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  double drop_path = 0.1;
  bool final_norm = true;
};

/// Linear map x W + b with W [in, out].
template <typename Real>
struct Linear {
  nn::Parameter<Real>* weight = nullptr;
  nn::Parameter<Real>* bias = nullptr;

  Linear() = default;
  Linear(nn::ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t out,
         nn::ParamGroup group, std::mt19937_64& rng);
  Var operator()(nn::Tape<Real>& tape, Var x) const;
};

template <typename Real>
struct LayerNorm {
  nn::Parameter<Real>* gain = nullptr;
  nn::Parameter<Real>* bias = nullptr;

  LayerNorm() = default;
  LayerNorm(nn::ParameterStore<Real>& store, const std::string& name, std::size_t width,
            nn::ParamGroup group);
  Var operator()(nn::Tape<Real>& tape, Var x) const;
};

template <typename Real>
class Transformer {
 public:
  Transformer(nn::ParameterStore<Real>& store, const std::string& name,
              const TransformerConfig& config, nn::ParamGroup group, std::mt19937_64& rng);

  /// x is [batch*seq_len, width]; key_mask (optional) excludes padded keys.
  Var forward(nn::Tape<Real>& tape, Var x, std::size_t seq_len,
              std::span<const std::uint8_t> key_mask, const ForwardContext& ctx) const;

  const TransformerConfig& config() const noexcept { return config_; }

 private:
  struct Block {
    LayerNorm<Real> norm1;
    Linear<Real> query, key, value, out;
    LayerNorm<Real> norm2;
    Linear<Real> fc1, fc2;
  };

  /// Per-sequence stochastic depth on a residual branch.
  Var drop_path(nn::Tape<Real>& tape, Var branch, std::size_t seq_len,
                const ForwardContext& ctx) const;

  TransformerConfig config_;
  std::vector<Block> blocks_;
  LayerNorm<Real> final_norm_;
};

extern template struct Linear<float>;
extern template struct Linear<double>;
extern template struct LayerNorm<float>;
extern template struct LayerNorm<double>;
extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace kclip::model

#endif  // KCLIP_MODEL_TRANSFORMER_HPP_
