// SPDX-License-Identifier: Apache-2.0

#include "kclip/objectives/losses.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "kclip/errors.hpp"

namespace kclip::objectives {

namespace {

std::vector<std::size_t> diagonal(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

template <typename Real>
std::size_t rows_of(const nn::Tape<Real>& tape, Var v) {
  return tape.value(v).rows();
}

}  // namespace

template <typename Real>
Var scaled_cosine(nn::Tape<Real>& tape, Var a, Var b, Var log_tau) {
  Var inv_tau = tape.exp(tape.scale(log_tau, Real(-1)));
  return tape.scale_by(tape.cosine_similarity(a, b), inv_tau);
}

template <typename Real>
Var clip_loss(nn::Tape<Real>& tape, Var image, Var text, Var log_tau) {
  const std::size_t n = rows_of(tape, image);
  if (n == 0) throw std::invalid_argument("clip_loss: empty batch");
  if (rows_of(tape, text) != n) {
    throw nn::ShapeError("clip_loss", tape.shape(image), tape.shape(text));
  }
  const auto target = diagonal(n);
  Var logits = scaled_cosine(tape, image, text, log_tau);
  Var forward = tape.cross_entropy(logits, target);
  Var backward = tape.cross_entropy(tape.transpose(logits), target);
  return tape.scale(tape.add(forward, backward), Real(0.5));
}

template <typename Real>
Var e2e_loss(nn::Tape<Real>& tape, Var tails, Var heads_relations, Var log_tau) {
  const std::size_t n = rows_of(tape, tails);
  if (n == 0) throw std::invalid_argument("e2e_loss: empty batch");
  if (rows_of(tape, heads_relations) != n) {
    throw nn::ShapeError("e2e_loss", tape.shape(tails), tape.shape(heads_relations));
  }
  return tape.cross_entropy(scaled_cosine(tape, tails, heads_relations, log_tau), diagonal(n));
}

template <typename Real>
Var e2r_loss(nn::Tape<Real>& tape, Var logits, std::span<const std::size_t> relations) {
  const std::size_t classes = tape.value(logits).cols();
  for (std::size_t r : relations) {
    if (r >= classes) {
      throw std::out_of_range("e2r_loss: relation id " + std::to_string(r) + " outside " +
                              std::to_string(classes) + " labels");
    }
  }
  return tape.cross_entropy(logits, relations);
}

template <typename Real>
Var g2e_loss(nn::Tape<Real>& tape, Var y, Var g, Var log_tau) {
  const std::size_t n = rows_of(tape, y);
  if (n == 0) throw std::invalid_argument("g2e_loss: empty entity set");
  if (tape.shape(y) != tape.shape(g)) throw nn::ShapeError("g2e_loss", tape.shape(y), tape.shape(g));
  return tape.cross_entropy(scaled_cosine(tape, y, g, log_tau), diagonal(n));
}

template <typename Real>
Var kd_loss(nn::Tape<Real>& tape, Var student_sims, Var student_log_tau,
            const nn::Tensor<Real>& teacher_sims, Real teacher_tau) {
  if (tape.shape(student_sims) != teacher_sims.shape()) {
    throw nn::ShapeError("kd_loss", tape.shape(student_sims), teacher_sims.shape());
  }
  nn::Tensor<Real> teacher_logits = teacher_sims;
  for (auto& x : teacher_logits.values()) x /= teacher_tau;
  Var teacher = tape.constant(teacher_logits);
  Var student =
      tape.scale_by(student_sims, tape.exp(tape.scale(student_log_tau, Real(-1))));
  Var rows = tape.kl_divergence(teacher, student);
  Var cols = tape.kl_divergence(tape.transpose(teacher), tape.transpose(student));
  return tape.scale(tape.add(rows, cols), Real(0.5));
}

template <typename Real>
Var gnn_propagate(nn::Tape<Real>& tape, const Subgraph& graph, Var y0, Var relations,
                  std::span<const Var> weights) {
  const std::size_t n = graph.entities, edges = graph.heads.size();
  if (graph.tails.size() != edges) throw std::invalid_argument("gnn_propagate: ragged edge list");
  if (rows_of(tape, y0) != n) {
    throw std::invalid_argument("gnn_propagate: " + std::to_string(rows_of(tape, y0)) +
                                " features for " + std::to_string(n) + " entities");
  }
  if (edges == 0 || weights.empty()) return y0;
  if (rows_of(tape, relations) != edges) {
    throw std::invalid_argument("gnn_propagate: relation rows do not match edges");
  }
  std::vector<std::uint8_t> incidence(n * edges, 0);
  std::vector<Real> isolated(n, Real(1));
  for (std::size_t e = 0; e < edges; ++e) {
    if (graph.heads[e] >= n || graph.tails[e] >= n) {
      throw std::out_of_range("gnn_propagate: edge endpoint outside subgraph");
    }
    incidence[graph.tails[e] * edges + e] = 1;
    isolated[graph.tails[e]] = Real(0);
  }
  const std::vector<std::size_t> broadcast(n, 0);
  Var g = y0;
  for (Var w : weights) {
    // Every tail row holds all edge scores; the incidence mask keeps its own.
    Var scores = tape.gather_rows(tape.transpose(tape.matmul(relations, w)), broadcast);
    Var attend = tape.masked_softmax(scores, incidence);
    Var messages = tape.matmul(attend, tape.gather_rows(g, graph.heads));
    g = tape.add(messages, tape.scale_rows(g, isolated, 1));
  }
  return g;
}

template <typename Real>
RelationHead<Real>::RelationHead(nn::ParameterStore<Real>& store, std::size_t width,
                                 std::size_t relations, std::mt19937_64& rng)
    : hidden_(store, "relation_head.hidden", width, width, nn::ParamGroup::kFusion, rng),
      out_(store, "relation_head.out", width, relations, nn::ParamGroup::kFusion, rng),
      relations_(relations) {
  if (relations == 0) throw std::invalid_argument("relation head needs at least one relation");
}

template <typename Real>
Var RelationHead<Real>::operator()(nn::Tape<Real>& tape, Var r) const {
  return out_(tape, tape.gelu(hidden_(tape, r)));
}

LossReport total_loss(double e2e, double e2r, double g2e, double kd, double clip_baseline) {
  const std::pair<const char*, double> parts[] = {
      {"e2e", e2e}, {"e2r", e2r}, {"g2e", g2e}, {"kd", kd}, {"clip_baseline", clip_baseline}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      throw NumericError(std::string("non-finite ") + name + " loss (" + std::to_string(value) +
                         ")");
    }
  }
  return LossReport{e2e, e2r, g2e, kd, clip_baseline, e2e + e2r + g2e + kd};
}

#define KCLIP_INSTANTIATE(Real)                                                                  \
  template Var scaled_cosine<Real>(nn::Tape<Real>&, Var, Var, Var);                              \
  template Var clip_loss<Real>(nn::Tape<Real>&, Var, Var, Var);                                  \
  template Var e2e_loss<Real>(nn::Tape<Real>&, Var, Var, Var);                                   \
  template Var e2r_loss<Real>(nn::Tape<Real>&, Var, std::span<const std::size_t>);               \
  template Var g2e_loss<Real>(nn::Tape<Real>&, Var, Var, Var);                                   \
  template Var kd_loss<Real>(nn::Tape<Real>&, Var, Var, const nn::Tensor<Real>&, Real);          \
  template Var gnn_propagate<Real>(nn::Tape<Real>&, const Subgraph&, Var, Var,                   \
                                   std::span<const Var>);                                        \
  template class RelationHead<Real>;

KCLIP_INSTANTIATE(float)
KCLIP_INSTANTIATE(double)

#undef KCLIP_INSTANTIATE

}  // namespace kclip::objectives
