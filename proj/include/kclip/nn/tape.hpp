// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every op in creation order, which is also a topological
// order, so backward() is a single reverse sweep. Parameters enter the tape
// once per tape through parameter(); their gradients are accumulated into
// Parameter::grad when backward() finishes.

#ifndef KCLIP_NN_TAPE_HPP_
#define KCLIP_NN_TAPE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "kclip/nn/parameter.hpp"
#include "kclip/nn/tensor.hpp"

namespace kclip::nn {

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

template <typename Real>
class Tape {
 public:
  /// With grad disabled no backward closures are recorded (evaluation mode).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor<Real> value);
  Var leaf(Tensor<Real> value);  // requires grad, read back through grad()
  Var parameter(Parameter<Real>& p);

  const Tensor<Real>& value(Var v) const { return nodes_.at(v.id).value; }
  const Shape& shape(Var v) const { return nodes_.at(v.id).value.shape(); }
  /// Gradient of the last backward() target; zeros for unreachable nodes.
  Tensor<Real> grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  /// Reverse sweep from a scalar node. Throws ShapeError on non-scalar loss.
  void backward(Var loss);

  // -- linear algebra ------------------------------------------------------
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var transpose(Var a);

  // -- elementwise ---------------------------------------------------------
  /// a + b where b's rows tile a's rows (bias rows, positional tables).
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, Real factor);
  /// Multiplies every element of a by the single-element tensor s.
  Var scale_by(Var a, Var s);
  Var exp(Var a);
  Var gelu(Var a);
  /// Row group i (rows [i*group, (i+1)*group)) is multiplied by factors[i].
  Var scale_rows(Var a, std::span<const Real> factors, std::size_t group);

  // -- layout --------------------------------------------------------------
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var a, std::size_t begin, std::size_t count);
  /// out[i] = table[index[i]]; backward scatter-adds.
  Var gather_rows(Var table, std::span<const std::size_t> index);
  Var embedding(Var table, std::span<const std::size_t> ids) { return gather_rows(table, ids); }

  // -- normalization -------------------------------------------------------
  Var layer_norm(Var x, Var gain, Var bias, Real eps = Real(1e-5));
  Var softmax(Var x);
  /// Softmax over entries with mask != 0; fully masked rows yield zeros.
  Var masked_softmax(Var x, std::span<const std::uint8_t> mask);
  Var l2_normalize(Var x);
  /// Row-wise cosine similarity matrix [rows(a), rows(b)].
  Var cosine_similarity(Var a, Var b);

  // -- attention -----------------------------------------------------------
  /// Scaled dot-product multi-head attention over packed sequences.
  /// q, k, v are [batch*seq_len, width]; key_mask (optional, batch*seq_len)
  /// marks keys that may be attended to.
  Var attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t heads,
                std::span<const std::uint8_t> key_mask = {});

  // -- reductions ----------------------------------------------------------
  Var sum(Var a);
  Var mean(Var a);
  /// Mean over each group of `group` rows, counting rows with row_mask != 0
  /// (all rows when row_mask is empty). Result is [rows/group, cols].
  Var mean_rows(Var a, std::size_t group, std::span<const std::uint8_t> row_mask = {});

  // -- losses --------------------------------------------------------------
  /// Mean over rows of -log softmax(logits)[target].
  Var cross_entropy(Var logits, std::span<const std::size_t> targets);
  /// Mean over rows of KL(softmax(p_logits) || softmax(q_logits)).
  Var kl_divergence(Var p_logits, Var q_logits);

 private:
  struct Node {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::function<void()> backward;
    Parameter<Real>* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Tensor<Real> value, bool requires_grad, std::function<void()> backward);
  Tensor<Real>& grad_ref(std::uint32_t id);
  bool any_requires(std::initializer_list<Var> vars) const;
  const Node& node(Var v) const { return nodes_.at(v.id); }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Real>*, Var> param_nodes_;
  bool grad_enabled_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace kclip::nn

#endif  // KCLIP_NN_TAPE_HPP_
