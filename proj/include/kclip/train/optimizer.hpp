// SPDX-License-Identifier: Apache-2.0
//
// Learning-rate schedule and the decoupled-weight-decay adaptive-moment
// optimizer with global-norm clipping and two learning-rate groups.

#ifndef KCLIP_TRAIN_OPTIMIZER_HPP_
#define KCLIP_TRAIN_OPTIMIZER_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "kclip/nn/parameter.hpp"
#include "kclip/train/config.hpp"

namespace kclip::train {

/// Linear warmup from 0 to the group's peak, then half-cosine to 0 at
/// config.steps. Throws std::out_of_range for step > config.steps.
double lr_at(std::size_t step, nn::ParamGroup group, const TrainConfig& config);

/// sqrt of the summed squares of every parameter gradient.
template <typename Real>
double global_grad_norm(const nn::ParameterStore<Real>& store);

template <typename Real>
class AdamW {
 public:
  explicit AdamW(const nn::ParameterStore<Real>& store);

  /// Clips gradients to config.clip_norm (in place), then updates every
  /// parameter. Returns the norm before clipping.
  double step(nn::ParameterStore<Real>& store, double lr_encoder, double lr_fusion,
              const TrainConfig& config);

  std::uint64_t steps() const noexcept { return steps_; }
  std::vector<nn::Tensor<Real>>& first_moment() noexcept { return m_; }
  std::vector<nn::Tensor<Real>>& second_moment() noexcept { return v_; }
  const std::vector<nn::Tensor<Real>>& first_moment() const noexcept { return m_; }
  const std::vector<nn::Tensor<Real>>& second_moment() const noexcept { return v_; }
  void set_steps(std::uint64_t s) noexcept { steps_ = s; }

 private:
  std::vector<nn::Tensor<Real>> m_, v_;
  std::uint64_t steps_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace kclip::train

#endif  // KCLIP_TRAIN_OPTIMIZER_HPP_
