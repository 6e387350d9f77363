// SPDX-License-Identifier: Apache-2.0
//
// Uni-modal encoders. Entities keep their full per-token feature maps
// ([L, d_o] per item); relations are pooled to a single d_o vector by a
// masked mean over non-pad positions.

#ifndef KCLIP_MODEL_ENCODERS_HPP_
#define KCLIP_MODEL_ENCODERS_HPP_

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "kclip/kg/image.hpp"
#include "kclip/model/tokenizer.hpp"
#include "kclip/model/transformer.hpp"

namespace kclip::model {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t output_dim = 64;  // d_o
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t patch_size = 8;
  std::size_t text_length = 16;  // l_T
  std::size_t vocab_size = 1024;
  double drop_path = 0.1;

  bool operator==(const EncoderConfig&) const = default;
  std::size_t image_tokens() const { return (image_size / patch_size) * (image_size / patch_size); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  /// Throws std::invalid_argument for inconsistent geometry.
  void validate() const;
  TransformerConfig transformer() const {
    return {layers, width, heads, mlp_ratio, drop_path, true};
  }
};

/// Flattened non-overlapping patches in raster order, each patch row-major
/// (y, x, c). Throws DataError on wrong geometry.
std::vector<float> patchify(const kg::Image& image, const EncoderConfig& config);

template <typename Real>
class ImageEncoder {
 public:
  ImageEncoder(nn::ParameterStore<Real>& store, const EncoderConfig& config, std::mt19937_64& rng);

  /// [images.size() * l_I, d_o].
  Var encode(nn::Tape<Real>& tape, std::span<const kg::Image* const> images,
             const ForwardContext& ctx) const;
  std::size_t tokens() const { return config_.image_tokens(); }

 private:
  EncoderConfig config_;
  Linear<Real> patch_embed_;
  nn::Parameter<Real>* position_ = nullptr;
  Transformer<Real> transformer_;
  Linear<Real> projection_;
};

template <typename Real>
class TextEncoder {
 public:
  TextEncoder(nn::ParameterStore<Real>& store, const EncoderConfig& config, std::mt19937_64& rng);

  /// [texts.size() * l_T, d_o]; pad keys are masked out of attention.
  Var encode(nn::Tape<Real>& tape, std::span<const TokenSequence> texts,
             const ForwardContext& ctx) const;
  /// Pooled relation vectors [texts.size(), d_o]. Throws DataError for a
  /// sequence without content tokens.
  Var encode_pooled(nn::Tape<Real>& tape, std::span<const TokenSequence> texts,
                    const ForwardContext& ctx) const;
  std::size_t tokens() const { return config_.text_length; }

 private:
  EncoderConfig config_;
  nn::Parameter<Real>* token_embedding_ = nullptr;
  nn::Parameter<Real>* position_ = nullptr;
  Transformer<Real> transformer_;
  Linear<Real> projection_;
};

/// Concatenated key masks of the given sequences.
std::vector<std::uint8_t> concat_masks(std::span<const TokenSequence> texts);

extern template class ImageEncoder<float>;
extern template class ImageEncoder<double>;
extern template class TextEncoder<float>;
extern template class TextEncoder<double>;

}  // namespace kclip::model

#endif  // KCLIP_MODEL_ENCODERS_HPP_
