// SPDX-License-Identifier: Apache-2.0

#include "kclip/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace kclip::nn {

namespace {

void record(GradCheckReport& report, double analytic, double numeric, const std::string& where) {
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
  ++report.coordinates;
  if (err > report.max_rel_err || report.worst.empty()) {
    report.max_rel_err = std::max(report.max_rel_err, err);
    report.worst = where;
  }
}

}  // namespace

GradCheckReport grad_check(const TensorFunction& f, std::vector<Tensor<double>> inputs,
                           double eps) {
  auto evaluate = [&](bool with_grad, std::vector<Tensor<double>>* grads) {
    Tape<double> tape(with_grad);
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const auto& in : inputs) vars.push_back(tape.leaf(in));
    Var out = f(tape, vars);
    const double value = tape.value(out).item();
    if (grads != nullptr) {
      tape.backward(out);
      for (Var v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };

  std::vector<Tensor<double>> analytic;
  evaluate(true, &analytic);

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double saved = inputs[i][k];
      inputs[i][k] = saved + eps;
      const double up = evaluate(false, nullptr);
      inputs[i][k] = saved - eps;
      const double down = evaluate(false, nullptr);
      inputs[i][k] = saved;
      record(report, analytic[i][k], (up - down) / (2 * eps),
             "input" + std::to_string(i) + "[" + std::to_string(k) + "]");
    }
  }
  return report;
}

GradCheckReport grad_check_parameters(const LossFunction& f, ParameterStore<double>& params,
                                      double eps, std::size_t max_coords, std::uint64_t seed) {
  params.zero_grad();
  {
    Tape<double> tape(true);
    Var loss = f(tape);
    tape.backward(loss);
  }
  auto evaluate = [&] {
    Tape<double> tape(false);
    return tape.value(f(tape)).item();
  };

  std::mt19937_64 rng(seed);
  GradCheckReport report;
  for (auto& p : params) {
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(max_coords);
    }
    for (std::size_t k : coords) {
      const double saved = p.value[k];
      p.value[k] = saved + eps;
      const double up = evaluate();
      p.value[k] = saved - eps;
      const double down = evaluate();
      p.value[k] = saved;
      record(report, p.grad[k], (up - down) / (2 * eps), p.name + "[" + std::to_string(k) + "]");
    }
  }
  return report;
}

}  // namespace kclip::nn
