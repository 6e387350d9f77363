// SPDX-License-Identifier: Apache-2.0

#include "kclip/train/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kclip::train {

double lr_at(std::size_t step, nn::ParamGroup group, const TrainConfig& config) {
  if (step > config.steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " beyond " +
                            std::to_string(config.steps));
  }
  const double peak = group == nn::ParamGroup::kEncoder ? config.lr_encoder : config.lr_fusion;
  if (step < config.warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(config.warmup);
  }
  const double progress = static_cast<double>(step - config.warmup) /
                          static_cast<double>(config.steps - config.warmup);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename Real>
double global_grad_norm(const nn::ParameterStore<Real>& store) {
  double sq = 0;
  for (const auto& p : store)
    for (Real g : p.grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

template <typename Real>
AdamW<Real>::AdamW(const nn::ParameterStore<Real>& store) {
  for (const auto& p : store) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

template <typename Real>
double AdamW<Real>::step(nn::ParameterStore<Real>& store, double lr_encoder, double lr_fusion,
                         const TrainConfig& config) {
  if (store.size() != m_.size()) throw std::logic_error("optimizer built for another store");
  const double norm = global_grad_norm(store);
  const double clip = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config.beta1, t), c2 = 1.0 - std::pow(config.beta2, t);
  const Real b1 = static_cast<Real>(config.beta1), b2 = static_cast<Real>(config.beta2);
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    const double lr = p.group == nn::ParamGroup::kEncoder ? lr_encoder : lr_fusion;
    const double decay = p.decay ? config.weight_decay : 0.0;
    auto value = p.value.values();
    auto grad = p.grad.values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < value.size(); ++k) {
      grad[k] = static_cast<Real>(grad[k] * clip);
      m[k] = b1 * m[k] + (Real(1) - b1) * grad[k];
      v[k] = b2 * v[k] + (Real(1) - b2) * grad[k] * grad[k];
      const double update = (static_cast<double>(m[k]) / c1) /
                            (std::sqrt(static_cast<double>(v[k]) / c2) + config.epsilon);
      value[k] = static_cast<Real>(value[k] - lr * (update + decay * value[k]));
    }
  }
  return norm;
}

template double global_grad_norm<float>(const nn::ParameterStore<float>&);
template double global_grad_norm<double>(const nn::ParameterStore<double>&);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace kclip::train
