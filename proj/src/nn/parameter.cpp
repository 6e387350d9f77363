// SPDX-License-Identifier: Apache-2.0

#include "kclip/nn/parameter.hpp"

namespace kclip::nn {

template <typename Real>
Parameter<Real>& ParameterStore<Real>::add(std::string name, Tensor<Real> init, ParamGroup group,
                                           bool decay) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Parameter<Real> p;
  p.name = std::move(name);
  p.grad = Tensor<Real>(init.shape());
  p.value = std::move(init);
  p.group = group;
  p.decay = decay;
  params_.push_back(std::move(p));
  return params_.back();
}

template <typename Real>
Parameter<Real>* ParameterStore<Real>::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename Real>
const Parameter<Real>* ParameterStore<Real>::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

template <typename Real>
void ParameterStore<Real>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename Real>
std::size_t ParameterStore<Real>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename Real>
Tensor<Real> normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<Real> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& x : t.values()) x = static_cast<Real>(dist(rng));
  return t;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template Tensor<float> normal_tensor<float>(Shape, double, std::mt19937_64&);
template Tensor<double> normal_tensor<double>(Shape, double, std::mt19937_64&);

}  // namespace kclip::nn
