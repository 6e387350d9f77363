// SPDX-License-Identifier: Apache-2.0
//
// Random-input helpers for gradient tests; the op cases themselves live in
// the library so that the command-line grad-check runs the same suite.

#ifndef KCLIP_TESTS_OP_CASES_HPP_
#define KCLIP_TESTS_OP_CASES_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kclip/nn/grad_check.hpp"
#include "kclip/train/grad_suite.hpp"

namespace kclip::testing {

using nn::Tape;
using nn::Tensor;
using nn::Var;

inline Tensor<double> random_tensor(nn::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& x : t.values()) x = dist(rng);
  return t;
}

using OpCase = train::GradCase;

inline std::vector<OpCase> op_cases(std::uint64_t seed) { return train::op_grad_cases(seed); }

}  // namespace kclip::testing

#endif  // KCLIP_TESTS_OP_CASES_HPP_
