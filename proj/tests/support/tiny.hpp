// SPDX-License-Identifier: Apache-2.0
//
// Small model and graph configurations for tests that need whole training
// steps to run in milliseconds.

#ifndef KCLIP_TESTS_SUPPORT_TINY_HPP_
#define KCLIP_TESTS_SUPPORT_TINY_HPP_

#include "kclip/kg/synth.hpp"
#include "kclip/train/config.hpp"

namespace kclip::testing {

inline model::ModelConfig tiny_model() {
  model::ModelConfig m;
  m.encoder.layers = 1;
  m.encoder.width = 8;
  m.encoder.heads = 2;
  m.encoder.mlp_ratio = 2;
  m.encoder.output_dim = 8;
  m.encoder.image_size = 8;
  m.encoder.patch_size = 4;
  m.encoder.text_length = 6;
  m.encoder.vocab_size = 400;
  m.encoder.drop_path = 0.1;
  m.fusion.layers = 1;
  m.fusion.width = 8;
  m.fusion.heads = 2;
  m.fusion.mlp_ratio = 2;
  m.fusion.drop_path = 0.1;
  return m;
}

inline kg::SynthSpec tiny_graph_spec(std::uint64_t seed = 7) {
  kg::SynthSpec s;
  s.entities = 8;
  s.relations = 3;
  s.triplets = 20;
  s.seed = seed;
  s.image_size = 8;
  return s;
}

inline train::RunConfig tiny_run(std::uint64_t seed = 0) {
  train::RunConfig c;
  c.model = tiny_model();
  c.train.steps = 50;
  c.train.warmup = 5;
  c.train.batch_size = 4;
  c.train.pair_batch_size = 4;
  c.train.seed = seed;
  return c;
}

}  // namespace kclip::testing

#endif  // KCLIP_TESTS_SUPPORT_TINY_HPP_
