// SPDX-License-Identifier: Apache-2.0

#include "kclip/kg/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "kclip/errors.hpp"

namespace kclip::kg {

namespace {

constexpr std::array<const char*, 13> kRelationNames = {
    "is a",    "part of",    "near",       "has",        "above",       "below", "made of",
    "used for", "located at", "related to", "similar to", "opposite of", "holds"};

constexpr std::array<const char*, 8> kClassWords = {"red",    "green", "blue",  "yellow",
                                                    "purple", "cyan",  "white", "orange"};

constexpr float kPalette[8][3] = {{0.9f, 0.1f, 0.1f}, {0.1f, 0.8f, 0.2f}, {0.15f, 0.2f, 0.9f},
                                  {0.9f, 0.85f, 0.1f}, {0.6f, 0.1f, 0.7f}, {0.1f, 0.8f, 0.8f},
                                  {0.9f, 0.9f, 0.9f},  {0.95f, 0.5f, 0.05f}};

std::string relation_name(std::size_t r) {
  if (r < kRelationNames.size()) return kRelationNames[r];
  return "relation " + std::to_string(r);
}

std::string class_word(std::size_t c) {
  if (c < kClassWords.size()) return kClassWords[c];
  return "class" + std::to_string(c);
}

void class_colour(std::size_t c, float (&out)[3]) {
  if (c < 8) {
    for (int k = 0; k < 3; ++k) out[k] = kPalette[c][k];
    return;
  }
  // beyond the palette: hue wheel
  const double h = std::fmod(static_cast<double>(c) * 0.618033988749895, 1.0) * 2 * std::numbers::pi;
  for (int k = 0; k < 3; ++k) {
    out[k] = static_cast<float>(0.5 + 0.45 * std::cos(h + k * 2.0 * std::numbers::pi / 3.0));
  }
}

}  // namespace

Image render_stripes(std::uint32_t size, std::uint32_t channels, const float (&colour)[3],
                     double angle, double frequency, double phase) {
  Image im{size, size, channels, std::vector<float>(static_cast<std::size_t>(size) * size * channels)};
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (std::uint32_t y = 0; y < size; ++y) {
    for (std::uint32_t x = 0; x < size; ++x) {
      const double u = (x * ca + y * sa) / size;
      const double wave = 0.5 + 0.5 * std::sin(2 * std::numbers::pi * frequency * u + phase);
      for (std::uint32_t c = 0; c < channels; ++c) {
        const double base = colour[c % 3];
        const double v = 0.25 * base + 0.75 * base * wave;
        im.pixels[(static_cast<std::size_t>(y) * size + x) * channels + c] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return im;
}

std::size_t synth_class_count(std::size_t relations) { return std::max<std::size_t>(relations, 2); }

std::size_t synth_latent_class(std::size_t entity, std::size_t relations) {
  return entity % synth_class_count(relations);
}

std::size_t synth_relation(std::size_t head_class, std::size_t tail_class, std::size_t relations) {
  return (head_class + tail_class) % relations;
}

KnowledgeGraph synth_graph(const SynthSpec& spec) {
  if (spec.relations < 1) throw DataError("synthetic graph needs at least one relation");
  if (spec.entities < 1) throw DataError("synthetic graph needs at least one entity");
  if (spec.triplets > spec.entities * spec.entities) {
    throw DataError("synthetic graph: " + std::to_string(spec.triplets) +
                    " triplets exceed the " + std::to_string(spec.entities * spec.entities) +
                    " ordered entity pairs");
  }
  const ModalityMix& mix = spec.mix;
  if (mix.text_only < 0 || mix.image_only < 0 || mix.both < 0 ||
      mix.text_only + mix.image_only + mix.both <= 0) {
    throw DataError("synthetic graph: modality mix must have a positive weight");
  }
  if (spec.image_size == 0 || spec.channels == 0) throw DataError("synthetic graph: empty image");

  std::mt19937_64 rng(spec.seed);
  KnowledgeGraph g;
  for (std::size_t r = 0; r < spec.relations; ++r) g.add_relation(relation_name(r));

  std::discrete_distribution<int> kind({mix.text_only, mix.image_only, mix.both});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < spec.entities; ++i) {
    const std::size_t cls = synth_latent_class(i, spec.relations);
    const int k = kind(rng);
    const double angle = unit(rng) * std::numbers::pi;
    const double freq = 1.0 + 3.0 * unit(rng);
    const double phase = unit(rng) * 2 * std::numbers::pi;
    Entity e;
    e.id = "e" + std::to_string(i);
    if (k == 0 || k == 2) e.texts.push_back(class_word(cls) + " item" + std::to_string(i));
    if (k == 1 || k == 2) {
      float colour[3];
      class_colour(cls, colour);
      e.images.push_back(render_stripes(spec.image_size, spec.channels, colour, angle, freq, phase));
    }
    g.add_entity(std::move(e));
  }

  std::vector<std::size_t> pairs(spec.entities * spec.entities);
  std::iota(pairs.begin(), pairs.end(), std::size_t{0});
  std::shuffle(pairs.begin(), pairs.end(), rng);
  pairs.resize(spec.triplets);
  for (std::size_t p : pairs) {
    const std::size_t h = p / spec.entities, t = p % spec.entities;
    const std::size_t r = synth_relation(synth_latent_class(h, spec.relations),
                                         synth_latent_class(t, spec.relations), spec.relations);
    g.add_triplet(Triplet{h, r, t});
  }
  return g;
}

std::vector<ImageTextPair> synth_pairs(std::size_t n, std::uint64_t seed, std::uint32_t image_size,
                                       std::uint32_t channels) {
  static constexpr const char* kOrientation[4] = {"horizontal", "diagonal", "vertical",
                                                  "slanted"};
  static constexpr const char* kDensity[4] = {"wide", "medium", "narrow", "fine"};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ImageTextPair> pairs;
  pairs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t colour_id = k % 4, orient = (k / 4) % 4, density = (k / 16) % 4;
    float colour[3];
    class_colour(colour_id, colour);
    const double angle = (0.5 + static_cast<double>(orient)) * std::numbers::pi / 4.0 +
                         0.1 * (unit(rng) - 0.5);
    const double freq = 1.0 + 1.5 * static_cast<double>(density);
    ImageTextPair p;
    p.image = render_stripes(image_size, channels, colour, angle, freq, unit(rng) * 2 * std::numbers::pi);
    p.caption = std::string("a ") + class_word(colour_id) + " pattern with " + kOrientation[orient] +
                " " + kDensity[density] + " stripes";
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace kclip::kg
