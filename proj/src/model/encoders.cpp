// SPDX-License-Identifier: Apache-2.0

#include "kclip/model/encoders.hpp"

#include <stdexcept>

#include "kclip/errors.hpp"

namespace kclip::model {

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw std::invalid_argument("image size " + std::to_string(image_size) +
                                " not divisible by patch size " + std::to_string(patch_size));
  }
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("encoder width not divisible by heads");
  }
  if (text_length < 3) throw std::invalid_argument("text length must be at least 3");
  if (vocab_size < kFirstWordToken) throw std::invalid_argument("vocabulary size too small");
}

std::vector<float> patchify(const kg::Image& image, const EncoderConfig& config) {
  if (image.height != config.image_size || image.width != config.image_size ||
      image.channels != config.channels) {
    throw DataError("image geometry " + std::to_string(image.height) + "x" +
                    std::to_string(image.width) + "x" + std::to_string(image.channels) +
                    " does not match " + std::to_string(config.image_size) + "x" +
                    std::to_string(config.image_size) + "x" + std::to_string(config.channels));
  }
  const std::size_t p = config.patch_size, per_side = config.image_size / p, c = config.channels;
  std::vector<float> out;
  out.reserve(config.image_tokens() * config.patch_dim());
  for (std::size_t py = 0; py < per_side; ++py)
    for (std::size_t px = 0; px < per_side; ++px)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          for (std::size_t ch = 0; ch < c; ++ch)
            out.push_back(image.at(static_cast<std::uint32_t>(py * p + y),
                                   static_cast<std::uint32_t>(px * p + x),
                                   static_cast<std::uint32_t>(ch)));
  return out;
}

std::vector<std::uint8_t> concat_masks(std::span<const TokenSequence> texts) {
  std::vector<std::uint8_t> mask;
  for (const auto& t : texts) mask.insert(mask.end(), t.mask.begin(), t.mask.end());
  return mask;
}

template <typename Real>
ImageEncoder<Real>::ImageEncoder(nn::ParameterStore<Real>& store, const EncoderConfig& config,
                                 std::mt19937_64& rng)
    : config_((config.validate(), config)),
      patch_embed_(store, "image.patch_embed", config.patch_dim(), config.width,
                   nn::ParamGroup::kEncoder, rng),
      position_(&store.add("image.position",
                           nn::normal_tensor<Real>({config.image_tokens(), config.width}, 0.02, rng),
                           nn::ParamGroup::kEncoder, false)),
      transformer_(store, "image.transformer", config.transformer(), nn::ParamGroup::kEncoder, rng),
      projection_(store, "image.projection", config.width, config.output_dim,
                  nn::ParamGroup::kEncoder, rng) {}

template <typename Real>
Var ImageEncoder<Real>::encode(nn::Tape<Real>& tape, std::span<const kg::Image* const> images,
                               const ForwardContext& ctx) const {
  if (images.empty()) throw std::invalid_argument("encode: no images");
  const std::size_t L = tokens(), D = config_.patch_dim();
  nn::Tensor<Real> patches = nn::Tensor<Real>::matrix(images.size() * L, D);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto flat = patchify(*images[i], config_);
    std::copy(flat.begin(), flat.end(), patches.row(i * L));
  }
  Var x = patch_embed_(tape, tape.constant(std::move(patches)));
  x = tape.add(x, tape.parameter(*position_));
  x = transformer_.forward(tape, x, L, {}, ctx);
  return projection_(tape, x);
}

template <typename Real>
TextEncoder<Real>::TextEncoder(nn::ParameterStore<Real>& store, const EncoderConfig& config,
                               std::mt19937_64& rng)
    : config_((config.validate(), config)),
      token_embedding_(&store.add("text.token_embedding",
                                  nn::normal_tensor<Real>({config.vocab_size, config.width}, 0.02, rng),
                                  nn::ParamGroup::kEncoder, true)),
      position_(&store.add("text.position",
                           nn::normal_tensor<Real>({config.text_length, config.width}, 0.01, rng),
                           nn::ParamGroup::kEncoder, false)),
      transformer_(store, "text.transformer", config.transformer(), nn::ParamGroup::kEncoder, rng),
      projection_(store, "text.projection", config.width, config.output_dim,
                  nn::ParamGroup::kEncoder, rng) {}

template <typename Real>
Var TextEncoder<Real>::encode(nn::Tape<Real>& tape, std::span<const TokenSequence> texts,
                              const ForwardContext& ctx) const {
  if (texts.empty()) throw std::invalid_argument("encode: no texts");
  const std::size_t L = tokens();
  std::vector<std::size_t> ids;
  ids.reserve(texts.size() * L);
  for (const auto& t : texts) {
    if (t.ids.size() != L || t.mask.size() != L) {
      throw DataError("token sequence of length " + std::to_string(t.ids.size()) + ", expected " +
                      std::to_string(L));
    }
    for (TokenId id : t.ids) {
      if (id >= config_.vocab_size) {
        throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(config_.vocab_size));
      }
      ids.push_back(id);
    }
  }
  const auto mask = concat_masks(texts);
  Var x = tape.embedding(tape.parameter(*token_embedding_), ids);
  x = tape.add(x, tape.parameter(*position_));
  x = transformer_.forward(tape, x, L, mask, ctx);
  return projection_(tape, x);
}

template <typename Real>
Var TextEncoder<Real>::encode_pooled(nn::Tape<Real>& tape, std::span<const TokenSequence> texts,
                                     const ForwardContext& ctx) const {
  for (const auto& t : texts) {
    std::size_t content = 0;
    for (TokenId id : t.ids)
      if (id != kPadToken && id != kBeginToken && id != kEndToken) ++content;
    if (content == 0) throw DataError("relation name produced no tokens");
  }
  Var maps = encode(tape, texts, ctx);
  return tape.mean_rows(maps, tokens(), concat_masks(texts));
}

template class ImageEncoder<float>;
template class ImageEncoder<double>;
template class TextEncoder<float>;
template class TextEncoder<double>;

}  // namespace kclip::model
