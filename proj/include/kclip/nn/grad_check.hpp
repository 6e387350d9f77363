// SPDX-License-Identifier: Apache-2.0
//
// Central-difference gradient checking at 64-bit precision.
//
// Error per coordinate is |analytic - numeric| / max(1, |numeric|); the
// reported value is the maximum over all checked coordinates.

#ifndef KCLIP_NN_GRAD_CHECK_HPP_
#define KCLIP_NN_GRAD_CHECK_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kclip/nn/parameter.hpp"
#include "kclip/nn/tape.hpp"

namespace kclip::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "<input or parameter>[flat index]"
};

/// Scalar function of leaf tensors built on the given tape.
using TensorFunction = std::function<Var(Tape<double>&, std::span<const Var>)>;

/// Checks every coordinate of every input.
GradCheckReport grad_check(const TensorFunction& f, std::vector<Tensor<double>> inputs,
                           double eps = 1e-4);

/// Scalar loss that reads parameters from a store through Tape::parameter.
using LossFunction = std::function<Var(Tape<double>&)>;

/// Checks up to max_coords randomly chosen coordinates of each parameter
/// (all of them when the parameter is smaller). Parameter values are
/// restored before returning.
GradCheckReport grad_check_parameters(const LossFunction& f, ParameterStore<double>& params,
                                      double eps = 1e-4, std::size_t max_coords = 8,
                                      std::uint64_t seed = 0);

}  // namespace kclip::nn

#endif  // KCLIP_NN_GRAD_CHECK_HPP_
