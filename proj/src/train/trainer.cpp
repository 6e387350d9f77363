// SPDX-License-Identifier: Apache-2.0

#include "kclip/train/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "kclip/errors.hpp"
#include "kclip/kg/sampler.hpp"

namespace kclip::train {

std::string metrics_line(const StepResult& r) {
  nlohmann::json j{{"step", r.step},
                   {"lr_encoder", r.lr_encoder},
                   {"lr_fusion", r.lr_fusion},
                   {"grad_norm", r.grad_norm},
                   {"pair_batch", r.pair_batch},
                   {"e2e", r.report.e2e},
                   {"e2r", r.report.e2r},
                   {"g2e", r.report.g2e},
                   {"kd", r.report.kd},
                   {"clip_baseline", r.report.clip_baseline},
                   {"total", r.report.total}};
  return j.dump();
}

namespace {

template <typename Real>
std::unique_ptr<model::KnowledgeClip<Real>> make_model(const RunConfig& config,
                                                       model::Vocabulary vocabulary,
                                                       std::size_t relations) {
  config.train.validate();
  return std::make_unique<model::KnowledgeClip<Real>>(config.model, std::move(vocabulary),
                                                      relations, config.train.seed);
}

template <typename Real>
std::vector<nn::Tensor<double>> moments_to_double(const std::vector<nn::Tensor<Real>>& m) {
  std::vector<nn::Tensor<double>> out;
  for (const auto& t : m) out.push_back(t.template cast<double>());
  return out;
}

template <typename Real>
NamedTensors name_moments(const nn::ParameterStore<Real>& store,
                          const std::vector<nn::Tensor<Real>>& m) {
  NamedTensors out;
  for (std::size_t i = 0; i < m.size(); ++i)
    out.emplace_back(store[i].name, m[i].template cast<double>());
  return out;
}

template <typename Real>
void load_moments(const NamedTensors& in, const nn::ParameterStore<Real>& store,
                  std::vector<nn::Tensor<Real>>& m) {
  if (in.size() != m.size()) throw DataError("checkpoint optimizer state size mismatch");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (in[i].first != store[i].name || in[i].second.shape() != m[i].shape()) {
      throw DataError("checkpoint optimizer state mismatch at '" + in[i].first + "'");
    }
    m[i] = in[i].second.template cast<Real>();
  }
}

model::Vocabulary vocabulary_from(const std::vector<std::string>& tokens) {
  std::stringstream text;
  for (const auto& t : tokens) text << t << '\n';
  return model::Vocabulary::read(text);
}

}  // namespace

template <typename Real>
std::unique_ptr<model::KnowledgeClip<Real>> model_from_checkpoint(const Checkpoint& ckpt) {
  auto m = make_model<Real>(ckpt.config, vocabulary_from(ckpt.vocabulary), ckpt.relations);
  import_values(ckpt.student, m->parameters());
  return m;
}

template std::unique_ptr<model::KnowledgeClip<float>> model_from_checkpoint(const Checkpoint&);
template std::unique_ptr<model::KnowledgeClip<double>> model_from_checkpoint(const Checkpoint&);

template <typename Real>
Trainer<Real>::Trainer(const RunConfig& config, const kg::KnowledgeGraph& graph,
                       std::vector<kg::ImageTextPair> pairs, model::Vocabulary vocabulary,
                       const nn::ParameterStore<Real>* initial)
    : config_(config),
      graph_(graph),
      pairs_(std::move(pairs)),
      student_(make_model<Real>(config, std::move(vocabulary), graph.relations().size())),
      optimizer_(student_->parameters()),
      rng_(config.train.seed) {
  if (initial) student_->parameters().copy_values_from(*initial);
  if (config_.train.objectives.kd) {
    teacher_ = std::make_unique<model::KnowledgeClip<Real>>(
        config_.model, student_->tokenizer().vocabulary(), student_->relations(),
        config_.train.seed);
    teacher_->parameters().copy_values_from(student_->parameters());
  }
}

template <typename Real>
Trainer<Real>::Trainer(const Checkpoint& ckpt, const kg::KnowledgeGraph& graph,
                       std::vector<kg::ImageTextPair> pairs)
    : config_(ckpt.config),
      graph_(graph),
      pairs_(std::move(pairs)),
      student_(make_model<Real>(ckpt.config, vocabulary_from(ckpt.vocabulary), ckpt.relations)),
      optimizer_(student_->parameters()),
      step_(ckpt.step) {
  if (ckpt.relations != graph.relations().size()) {
    throw DataError("checkpoint trained for " + std::to_string(ckpt.relations) +
                    " relations, graph has " + std::to_string(graph.relations().size()));
  }
  import_values(ckpt.student, student_->parameters());
  if (!ckpt.teacher.empty()) {
    teacher_ = std::make_unique<model::KnowledgeClip<Real>>(
        config_.model, student_->tokenizer().vocabulary(), ckpt.relations, config_.train.seed);
    import_values(ckpt.teacher, teacher_->parameters());
  }
  load_moments(ckpt.first_moment, student_->parameters(), optimizer_.first_moment());
  load_moments(ckpt.second_moment, student_->parameters(), optimizer_.second_moment());
  optimizer_.set_steps(ckpt.optimizer_steps);
  std::istringstream state(ckpt.rng);
  state >> rng_;
  if (!state) throw DataError("checkpoint random engine state is malformed");
}

template <typename Real>
PairBatch Trainer<Real>::sample_pairs() {
  const std::size_t n = std::min(config_.train.pair_batch_size, pairs_.size());
  std::vector<std::size_t> order(pairs_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  PairBatch out;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng_)]);
    out.images.push_back(&pairs_[order[i]].image);
    out.captions.push_back(pairs_[order[i]].caption);
  }
  return out;
}

template <typename Real>
StepResult Trainer<Real>::step() {
  if (finished()) throw std::logic_error("training already finished");
  const auto& obj = config_.train.objectives;
  std::optional<kg::TripletBatch> batch;
  if (obj.any_graph()) {
    batch = kg::sample_batch(graph_, config_.train.batch_size, rng_());
  }
  std::optional<PairBatch> pairs;
  const bool wants_pairs = !pairs_.empty() && ((obj.kd && teacher_) || obj.clip);
  if (wants_pairs && std::bernoulli_distribution(config_.train.interleave)(rng_)) {
    pairs = sample_pairs();
  }
  return train_step(batch ? &*batch : nullptr, pairs ? &*pairs : nullptr);
}

template <typename Real>
typename Trainer<Real>::Terms Trainer<Real>::build(nn::Tape<Real>& tape,
                                                   const kg::TripletBatch* batch,
                                                   const PairBatch* pairs,
                                                   const model::ForwardContext& ctx) const {
  const auto& obj = config_.train.objectives;
  const auto& m = *student_;
  Terms t;
  Var log_tau = m.log_tau(tape);
  if (batch && obj.any_graph()) {
    const auto fw = m.forward(tape, graph_, batch->items, ctx, obj.symmetric_e2e);
    if (obj.e2e) {
      Var e2e = objectives::e2e_loss(tape, fw.tails, fw.heads_relations, log_tau);
      if (obj.symmetric_e2e) {
        Var flipped = objectives::e2e_loss(tape, fw.heads_only, fw.relations_tails, log_tau);
        e2e = tape.scale(tape.add(e2e, flipped), Real(0.5));
      }
      t.e2e = e2e;
    }
    if (obj.e2r) {
      std::vector<std::size_t> labels;
      for (const auto& s : batch->items) labels.push_back(s.relation);
      t.e2r = objectives::e2r_loss(tape, fw.relation_logits, labels);
    }
    if (obj.g2e) t.g2e = objectives::g2e_loss(tape, fw.nodes, m.propagate(tape, fw), log_tau);
  }
  if (pairs && !pairs->images.empty()) {
    Var image = m.pooled_images(tape, pairs->images, ctx);
    Var text = m.pooled_texts(tape, pairs->captions, ctx);
    t.clip = objectives::clip_loss(tape, image, text, log_tau);
    if (obj.kd && teacher_) {
      nn::Tape<Real> frozen(false);
      const auto eval = model::ForwardContext::eval();
      Var ti = teacher_->pooled_images(frozen, pairs->images, eval);
      Var tt = teacher_->pooled_texts(frozen, pairs->captions, eval);
      const nn::Tensor<Real> teacher_sims = frozen.value(frozen.cosine_similarity(ti, tt));
      t.kd = objectives::kd_loss(tape, tape.cosine_similarity(image, text), log_tau, teacher_sims,
                                 teacher_->tau());
    }
  }
  return t;
}

template <typename Real>
objectives::LossReport Trainer<Real>::report(const nn::Tape<Real>& tape, const Terms& t) const {
  auto value = [&](const std::optional<Var>& v) {
    return v ? static_cast<double>(tape.value(*v).item()) : 0.0;
  };
  return objectives::total_loss(value(t.e2e), value(t.e2r), value(t.g2e), value(t.kd),
                                value(t.clip));
}

template <typename Real>
StepResult Trainer<Real>::train_step(const kg::TripletBatch* batch, const PairBatch* pairs) {
  if (finished()) throw std::logic_error("training already finished");
  const auto& cfg = config_.train;
  StepResult r;
  r.step = step_;
  r.lr_encoder = lr_at(step_, nn::ParamGroup::kEncoder, cfg);
  r.lr_fusion = lr_at(step_, nn::ParamGroup::kFusion, cfg);
  r.pair_batch = pairs != nullptr;

  nn::Tape<Real> tape;
  const model::ForwardContext ctx{true, &rng_};
  const Terms terms = build(tape, batch, pairs, ctx);
  r.report = report(tape, terms);

  std::vector<Var> parts;
  for (const auto* v : {&terms.e2e, &terms.e2r, &terms.g2e, &terms.kd})
    if (*v) parts.push_back(**v);
  if (cfg.objectives.clip && terms.clip) parts.push_back(*terms.clip);
  if (!parts.empty()) {
    Var objective = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) objective = tape.add(objective, parts[i]);
    auto& store = student_->parameters();
    store.zero_grad();
    tape.backward(objective);
    r.grad_norm = optimizer_.step(store, r.lr_encoder, r.lr_fusion, cfg);
  }
  ++step_;
  return r;
}

template <typename Real>
objectives::LossReport Trainer<Real>::evaluate(const kg::TripletBatch* batch,
                                               const PairBatch* pairs) const {
  nn::Tape<Real> tape(false);
  return report(tape, build(tape, batch, pairs, model::ForwardContext::eval()));
}

template <typename Real>
Checkpoint Trainer<Real>::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.vocabulary = student_->tokenizer().vocabulary().tokens();
  c.relations = student_->relations();
  c.step = step_;
  c.optimizer_steps = optimizer_.steps();
  std::ostringstream state;
  state << rng_;
  c.rng = state.str();
  c.student = export_values(student_->parameters());
  if (teacher_) c.teacher = export_values(teacher_->parameters());
  c.first_moment = name_moments(student_->parameters(), optimizer_.first_moment());
  c.second_moment = name_moments(student_->parameters(), optimizer_.second_moment());
  return c;
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace kclip::train
