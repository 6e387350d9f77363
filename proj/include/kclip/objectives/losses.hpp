// SPDX-License-Identifier: Apache-2.0
//
// Contrastive, classification and distillation objectives, and the
// relation-weighted propagation over a batch subgraph.
//
// Temperatures are passed as log tau (a single-element Var) so that the
// logits are cos * exp(-log tau).

#ifndef KCLIP_OBJECTIVES_LOSSES_HPP_
#define KCLIP_OBJECTIVES_LOSSES_HPP_

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "kclip/model/transformer.hpp"

namespace kclip::objectives {

using nn::Var;

/// Cosine similarities divided by tau.
template <typename Real>
Var scaled_cosine(nn::Tape<Real>& tape, Var a, Var b, Var log_tau);

/// Symmetric InfoNCE over paired rows of a and b, averaged over rows.
template <typename Real>
Var clip_loss(nn::Tape<Real>& tape, Var image, Var text, Var log_tau);

/// Anchors Y(-,-,t_i) against candidates Y(h_j,r_j,-); target j = i.
template <typename Real>
Var e2e_loss(nn::Tape<Real>& tape, Var tails, Var heads_relations, Var log_tau);

/// Cross-entropy of relation logits against relation ids. Throws
/// std::out_of_range for ids >= logits width.
template <typename Real>
Var e2r_loss(nn::Tape<Real>& tape, Var logits, std::span<const std::size_t> relations);

/// Anchors Y(-,-,t_i) against propagated G(t_j); target j = i.
template <typename Real>
Var g2e_loss(nn::Tape<Real>& tape, Var y, Var g, Var log_tau);

/// Mean of the row-wise and column-wise KL(teacher || student) between
/// softmax distributions of the two similarity matrices. The teacher side
/// is a constant.
template <typename Real>
Var kd_loss(nn::Tape<Real>& tape, Var student_sims, Var student_log_tau,
            const nn::Tensor<Real>& teacher_sims, Real teacher_tau);

/// Directed edges of a batch subgraph over local entity indices.
struct Subgraph {
  std::size_t entities = 0;
  std::vector<std::size_t> heads;  // one per edge
  std::vector<std::size_t> tails;  // one per edge
};

/// L = weights.size() rounds of
///   G(t) = sum_i softmax_i(R_i . w) G(h_i)   over edges into t,
/// entities without incoming edges keep their previous feature.
/// y0 is [entities, d], relations [edges, d], each weight [d, 1].
template <typename Real>
Var gnn_propagate(nn::Tape<Real>& tape, const Subgraph& graph, Var y0, Var relations,
                  std::span<const Var> weights);

/// Two-layer classifier d_m -> d_m -> |R| on relation-slot outputs.
template <typename Real>
class RelationHead {
 public:
  RelationHead(nn::ParameterStore<Real>& store, std::size_t width, std::size_t relations,
               std::mt19937_64& rng);
  Var operator()(nn::Tape<Real>& tape, Var r) const;
  std::size_t relations() const noexcept { return relations_; }

 private:
  model::Linear<Real> hidden_, out_;
  std::size_t relations_;
};

struct LossReport {
  double e2e = 0;
  double e2r = 0;
  double g2e = 0;
  double kd = 0;
  double clip_baseline = 0;
  double total = 0;
};

/// total = e2e + e2r + g2e + kd. Throws NumericError naming the first
/// non-finite component.
LossReport total_loss(double e2e, double e2r, double g2e, double kd, double clip_baseline = 0);

}  // namespace kclip::objectives

#endif  // KCLIP_OBJECTIVES_LOSSES_HPP_
