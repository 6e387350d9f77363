// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference gradient suite: every tape op, every loss on leaf
// inputs, and every loss through a toy model's parameters, at 64-bit.

#ifndef KCLIP_TRAIN_GRAD_SUITE_HPP_
#define KCLIP_TRAIN_GRAD_SUITE_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kclip/kg/synth.hpp"
#include "kclip/model/knowledge_clip.hpp"
#include "kclip/nn/grad_check.hpp"

namespace kclip::train {

struct GradCase {
  std::string name;
  nn::TensorFunction fn;
  std::vector<nn::Tensor<double>> inputs;
};

nn::Tensor<double> random_tensor(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0);

/// Every differentiable op, contracted against a fixed random weighting so
/// the scalar depends on every output coordinate.
std::vector<GradCase> op_grad_cases(std::uint64_t seed);
/// clip, e2e, e2r, g2e (through propagation) and kd on random leaf inputs.
std::vector<GradCase> loss_grad_cases(std::uint64_t seed);

/// Toy model (all widths <= 16) and graph used for the parameter checks.
model::ModelConfig toy_model_config();
kg::SynthSpec toy_graph_spec(std::uint64_t seed);

struct GradSuiteEntry {
  std::string name;
  std::uint64_t seed = 0;
  nn::GradCheckReport report;
};

struct GradSuiteReport {
  std::vector<GradSuiteEntry> entries;
  double max_rel_err = 0;
  std::string worst;
};

/// Runs op, leaf-loss and (optionally) model-parameter checks for seeds
/// [first_seed, first_seed + seeds).
GradSuiteReport run_grad_suite(std::uint64_t first_seed, std::size_t seeds, bool model_losses = true,
                               std::size_t coords_per_parameter = 2);

}  // namespace kclip::train

#endif  // KCLIP_TRAIN_GRAD_SUITE_HPP_
