// SPDX-License-Identifier: Apache-2.0
//
// Training loop state: student model, optional frozen teacher, optimizer
// moments, step counter and the single random engine that drives batch
// sampling, pair interleaving and drop path.

#ifndef KCLIP_TRAIN_TRAINER_HPP_
#define KCLIP_TRAIN_TRAINER_HPP_

#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kclip/kg/jsonl.hpp"
#include "kclip/model/knowledge_clip.hpp"
#include "kclip/objectives/losses.hpp"
#include "kclip/train/checkpoint.hpp"
#include "kclip/train/config.hpp"
#include "kclip/train/optimizer.hpp"

namespace kclip::train {

using nn::Var;

struct PairBatch {
  std::vector<const kg::Image*> images;
  std::vector<std::string> captions;
};

struct StepResult {
  std::size_t step = 0;  // step index the update was taken at
  double lr_encoder = 0;
  double lr_fusion = 0;
  double grad_norm = 0;
  bool pair_batch = false;
  objectives::LossReport report;
};

/// One metrics line: {"step", "lr_encoder", "lr_fusion", "grad_norm",
/// "pair_batch", "e2e", "e2r", "g2e", "kd", "clip_baseline", "total"}.
std::string metrics_line(const StepResult& r);

template <typename Real>
class Trainer {
 public:
  /// Fresh student from config.train.seed. With `initial` the student (and
  /// the teacher, when distilling) start from its parameter values.
  Trainer(const RunConfig& config, const kg::KnowledgeGraph& graph,
          std::vector<kg::ImageTextPair> pairs, model::Vocabulary vocabulary,
          const nn::ParameterStore<Real>* initial = nullptr);
  /// Resumes bit-exactly from a checkpoint.
  Trainer(const Checkpoint& ckpt, const kg::KnowledgeGraph& graph,
          std::vector<kg::ImageTextPair> pairs);

  /// Samples a graph batch and (with probability config.interleave) a pair
  /// batch, then calls train_step.
  StepResult step();
  /// One forward/backward/update. Throws NumericError on a non-finite loss
  /// before any parameter changes.
  StepResult train_step(const kg::TripletBatch* batch, const PairBatch* pairs);

  /// Loss report without an update, in evaluation mode.
  objectives::LossReport evaluate(const kg::TripletBatch* batch, const PairBatch* pairs) const;

  Checkpoint checkpoint() const;

  model::KnowledgeClip<Real>& model() noexcept { return *student_; }
  const model::KnowledgeClip<Real>& model() const noexcept { return *student_; }
  const model::KnowledgeClip<Real>* teacher() const noexcept { return teacher_.get(); }
  const RunConfig& config() const noexcept { return config_; }
  std::size_t steps_done() const noexcept { return step_; }
  bool finished() const noexcept { return step_ >= config_.train.steps; }
  std::span<const kg::ImageTextPair> pairs() const noexcept { return pairs_; }

 private:
  struct Terms {
    std::optional<Var> e2e, e2r, g2e, kd, clip;
  };
  Terms build(nn::Tape<Real>& tape, const kg::TripletBatch* batch, const PairBatch* pairs,
              const model::ForwardContext& ctx) const;
  objectives::LossReport report(const nn::Tape<Real>& tape, const Terms& terms) const;
  PairBatch sample_pairs();

  RunConfig config_;
  const kg::KnowledgeGraph& graph_;
  std::vector<kg::ImageTextPair> pairs_;
  std::unique_ptr<model::KnowledgeClip<Real>> student_;
  std::unique_ptr<model::KnowledgeClip<Real>> teacher_;
  AdamW<Real> optimizer_;
  std::size_t step_ = 0;
  std::mt19937_64 rng_;
};

/// The student of a checkpoint, ready for evaluation.
template <typename Real>
std::unique_ptr<model::KnowledgeClip<Real>> model_from_checkpoint(const Checkpoint& ckpt);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace kclip::train

#endif  // KCLIP_TRAIN_TRAINER_HPP_
