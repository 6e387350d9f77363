// SPDX-License-Identifier: Apache-2.0
//
// Named trainable tensors and the store that owns them.

#ifndef KCLIP_NN_PARAMETER_HPP_
#define KCLIP_NN_PARAMETER_HPP_

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "kclip/nn/tensor.hpp"

namespace kclip::nn {

/// Optimizer group. Encoders and the fusion side train at different rates.
enum class ParamGroup : std::uint8_t { kEncoder = 0, kFusion = 1 };

template <typename Real>
struct Parameter {
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;
  ParamGroup group = ParamGroup::kFusion;
  bool decay = false;  // decoupled weight decay applies only when set

  void zero_grad() { grad.fill(Real(0)); }
};

/// Owns parameters with stable addresses; registration order is the
/// canonical order for checkpoints and optimizer moments.
template <typename Real>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<Real>& add(std::string name, Tensor<Real> init, ParamGroup group, bool decay);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter<Real>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<Real>& operator[](std::size_t i) const { return params_[i]; }
  Parameter<Real>* find(const std::string& name);
  const Parameter<Real>* find(const std::string& name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  std::size_t element_count() const;

  /// Copies values from a store with identical names and shapes.
  template <typename Other>
  void copy_values_from(const ParameterStore<Other>& other);

 private:
  std::deque<Parameter<Real>> params_;
};

template <typename Real>
template <typename Other>
void ParameterStore<Real>::copy_values_from(const ParameterStore<Other>& other) {
  if (other.size() != params_.size()) {
    throw ShapeError("parameter store size mismatch: " + std::to_string(other.size()) + " vs " +
                     std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = other[i];
    auto& dst = params_[i];
    if (src.name != dst.name || src.value.shape() != dst.value.shape()) {
      throw ShapeError("parameter mismatch at '" + dst.name + "' vs '" + src.name + "'");
    }
    dst.value = src.value.template cast<Real>();
  }
}

/// Normal(0, stddev) initializer driven by an explicit engine.
template <typename Real>
Tensor<Real> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng);

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace kclip::nn

#endif  // KCLIP_NN_PARAMETER_HPP_
