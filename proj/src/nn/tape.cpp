// SPDX-License-Identifier: Apache-2.0

#include "kclip/nn/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

namespace kclip::nn {

namespace {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using ConstMap = Eigen::Map<const RowMatrix<Real>>;
template <typename Real>
using MutMap = Eigen::Map<RowMatrix<Real>>;

// c (+)= op(a) * op(b), where a is stored [a_rows, a_cols] and so on.
template <typename Real>
void gemm(const Real* a, std::size_t a_rows, std::size_t a_cols, bool trans_a, const Real* b,
          std::size_t b_rows, std::size_t b_cols, bool trans_b, Real* c, bool accumulate) {
  ConstMap<Real> ma(a, static_cast<Eigen::Index>(a_rows), static_cast<Eigen::Index>(a_cols));
  ConstMap<Real> mb(b, static_cast<Eigen::Index>(b_rows), static_cast<Eigen::Index>(b_cols));
  const auto m = static_cast<Eigen::Index>(trans_a ? a_cols : a_rows);
  const auto n = static_cast<Eigen::Index>(trans_b ? b_rows : b_cols);
  MutMap<Real> mc(c, m, n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      mc.noalias() += lhs * rhs;
    } else {
      mc.noalias() = lhs * rhs;
    }
  };
  if (trans_a && trans_b) {
    run(ma.transpose(), mb.transpose());
  } else if (trans_a) {
    run(ma.transpose(), mb);
  } else if (trans_b) {
    run(ma, mb.transpose());
  } else {
    run(ma, mb);
  }
}

void require(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok) throw ShapeError(op, a, b);
}

}  // namespace

template <typename Real>
Var Tape<Real>::push(Tensor<Real> value, bool requires_grad, std::function<void()> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && grad_enabled_;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
Tensor<Real>& Tape<Real>::grad_ref(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor<Real>(n.value.shape());
  return n.grad;
}

template <typename Real>
bool Tape<Real>::any_requires(std::initializer_list<Var> vars) const {
  if (!grad_enabled_) return false;
  return std::any_of(vars.begin(), vars.end(), [&](Var v) { return nodes_.at(v.id).requires_grad; });
}

template <typename Real>
Tensor<Real> Tape<Real>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.shape() != n.value.shape()) return Tensor<Real>(n.value.shape());
  return n.grad;
}

template <typename Real>
Var Tape<Real>::constant(Tensor<Real> value) {
  return push(std::move(value), false, nullptr);
}

template <typename Real>
Var Tape<Real>::leaf(Tensor<Real> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename Real>
Var Tape<Real>::parameter(Parameter<Real>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return it->second;
  Var v = leaf(p.value);
  nodes_[v.id].param = &p;
  param_nodes_.emplace(&p, v);
  return v;
}

template <typename Real>
void Tape<Real>::backward(Var loss) {
  if (node(loss).value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(node(loss).value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<Real>();
  if (!nodes_[loss.id].requires_grad) return;
  grad_ref(loss.id)[0] = Real(1);
  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward();
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.empty()) continue;
    auto& g = n.param->grad;
    if (g.shape() != n.value.shape()) g = Tensor<Real>(n.value.shape());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
  }
}

// ---------------------------------------------------------------------------

template <typename Real>
Var Tape<Real>::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  require(va.shape().size() == 2 && vb.shape().size() == 2, "matmul", va.shape(), vb.shape());
  const std::size_t m = trans_a ? va.cols() : va.rows();
  const std::size_t k = trans_a ? va.rows() : va.cols();
  const std::size_t kb = trans_b ? vb.cols() : vb.rows();
  const std::size_t n = trans_b ? vb.rows() : vb.cols();
  require(k == kb, "matmul", va.shape(), vb.shape());
  Tensor<Real> out = Tensor<Real>::matrix(m, n);
  gemm(va.data(), va.rows(), va.cols(), trans_a, vb.data(), vb.rows(), vb.cols(), trans_b,
       out.data(), false);
  const auto ia = a.id, ib = b.id;
  std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a, b}), [this, ia, ib, self, trans_a, trans_b] {
    const auto& dc = nodes_[self].grad;
    const auto& A = nodes_[ia].value;
    const auto& B = nodes_[ib].value;
    const std::size_t m = dc.rows(), n = dc.cols();
    if (nodes_[ia].requires_grad) {
      auto& da = grad_ref(ia);
      if (!trans_a) {  // dA = dC op(B)^T
        gemm(dc.data(), m, n, false, B.data(), B.rows(), B.cols(), !trans_b, da.data(), true);
      } else {  // dA = op(B) dC^T
        gemm(B.data(), B.rows(), B.cols(), trans_b, dc.data(), m, n, true, da.data(), true);
      }
    }
    if (nodes_[ib].requires_grad) {
      auto& db = grad_ref(ib);
      if (!trans_b) {  // dB = op(A)^T dC
        gemm(A.data(), A.rows(), A.cols(), !trans_a, dc.data(), m, n, false, db.data(), true);
      } else {  // dB = dC^T op(A)
        gemm(dc.data(), m, n, true, A.data(), A.rows(), A.cols(), trans_a, db.data(), true);
      }
    }
  });
}

template <typename Real>
Var Tape<Real>::transpose(Var a) {
  const auto& va = node(a).value;
  const std::size_t r = va.rows(), c = va.cols();
  Tensor<Real> out = Tensor<Real>::matrix(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = va.at(i, j);
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a}), [this, ia, self, r, c] {
    const auto& d = nodes_[self].grad;
    auto& da = grad_ref(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da.at(i, j) += d.at(j, i);
  });
}

template <typename Real>
Var Tape<Real>::add(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  require(vb.cols() == va.cols() && vb.rows() > 0 && va.rows() % vb.rows() == 0, "add",
          va.shape(), vb.shape());
  Tensor<Real> out = va;
  const std::size_t tile = vb.size();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += vb[k % tile];
  const auto ia = a.id, ib = b.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a, b}), [this, ia, ib, self, tile] {
    const auto& d = nodes_[self].grad;
    if (nodes_[ia].requires_grad) {
      auto& da = grad_ref(ia);
      for (std::size_t k = 0; k < d.size(); ++k) da[k] += d[k];
    }
    if (nodes_[ib].requires_grad) {
      auto& db = grad_ref(ib);
      for (std::size_t k = 0; k < d.size(); ++k) db[k % tile] += d[k];
    }
  });
}

template <typename Real>
Var Tape<Real>::sub(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  require(va.shape() == vb.shape(), "sub", va.shape(), vb.shape());
  Tensor<Real> out = va;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= vb[k];
  const auto ia = a.id, ib = b.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a, b}), [this, ia, ib, self] {
    const auto& d = nodes_[self].grad;
    if (nodes_[ia].requires_grad) {
      auto& da = grad_ref(ia);
      for (std::size_t k = 0; k < d.size(); ++k) da[k] += d[k];
    }
    if (nodes_[ib].requires_grad) {
      auto& db = grad_ref(ib);
      for (std::size_t k = 0; k < d.size(); ++k) db[k] -= d[k];
    }
  });
}

template <typename Real>
Var Tape<Real>::mul(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  require(va.shape() == vb.shape(), "mul", va.shape(), vb.shape());
  Tensor<Real> out = va;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= vb[k];
  const auto ia = a.id, ib = b.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a, b}), [this, ia, ib, self] {
    const auto& d = nodes_[self].grad;
    if (nodes_[ia].requires_grad) {
      auto& da = grad_ref(ia);
      const auto& vb = nodes_[ib].value;
      for (std::size_t k = 0; k < d.size(); ++k) da[k] += d[k] * vb[k];
    }
    if (nodes_[ib].requires_grad) {
      auto& db = grad_ref(ib);
      const auto& va = nodes_[ia].value;
      for (std::size_t k = 0; k < d.size(); ++k) db[k] += d[k] * va[k];
    }
  });
}

template <typename Real>
Var Tape<Real>::scale(Var a, Real factor) {
  Tensor<Real> out = node(a).value;
  for (auto& x : out.values()) x *= factor;
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a}), [this, ia, self, factor] {
    const auto& d = nodes_[self].grad;
    auto& da = grad_ref(ia);
    for (std::size_t k = 0; k < d.size(); ++k) da[k] += d[k] * factor;
  });
}

template <typename Real>
Var Tape<Real>::scale_by(Var a, Var s) {
  const auto& vs = node(s).value;
  require(vs.size() == 1, "scale_by", node(a).value.shape(), vs.shape());
  const Real factor = vs[0];
  Tensor<Real> out = node(a).value;
  for (auto& x : out.values()) x *= factor;
  const auto ia = a.id, is = s.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a, s}), [this, ia, is, self] {
    const auto& d = nodes_[self].grad;
    const Real f = nodes_[is].value[0];
    if (nodes_[ia].requires_grad) {
      auto& da = grad_ref(ia);
      for (std::size_t k = 0; k < d.size(); ++k) da[k] += d[k] * f;
    }
    if (nodes_[is].requires_grad) {
      const auto& va = nodes_[ia].value;
      Real acc = 0;
      for (std::size_t k = 0; k < d.size(); ++k) acc += d[k] * va[k];
      grad_ref(is)[0] += acc;
    }
  });
}

template <typename Real>
Var Tape<Real>::exp(Var a) {
  Tensor<Real> out = node(a).value;
  for (auto& x : out.values()) x = std::exp(x);
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a}), [this, ia, self] {
    const auto& d = nodes_[self].grad;
    const auto& y = nodes_[self].value;
    auto& da = grad_ref(ia);
    for (std::size_t k = 0; k < d.size(); ++k) da[k] += d[k] * y[k];
  });
}

template <typename Real>
Var Tape<Real>::gelu(Var a) {
  constexpr Real kInvSqrt2 = Real(1) / std::numbers::sqrt2_v<Real>;
  constexpr Real kInvSqrt2Pi = std::numbers::inv_sqrtpi_v<Real> * kInvSqrt2;
  Tensor<Real> out = node(a).value;
  for (auto& x : out.values()) x = Real(0.5) * x * (Real(1) + std::erf(x * kInvSqrt2));
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a}), [this, ia, self] {
    const auto& d = nodes_[self].grad;
    const auto& x = nodes_[ia].value;
    auto& da = grad_ref(ia);
    for (std::size_t k = 0; k < d.size(); ++k) {
      const Real xv = x[k];
      const Real cdf = Real(0.5) * (Real(1) + std::erf(xv * kInvSqrt2));
      const Real pdf = kInvSqrt2Pi * std::exp(Real(-0.5) * xv * xv);
      da[k] += d[k] * (cdf + xv * pdf);
    }
  });
}

template <typename Real>
Var Tape<Real>::scale_rows(Var a, std::span<const Real> factors, std::size_t group) {
  const auto& va = node(a).value;
  const std::size_t cols = va.cols();
  if (group == 0 || va.rows() != factors.size() * group) {
    throw ShapeError("scale_rows: " + std::to_string(factors.size()) + " factors x group " +
                     std::to_string(group) + " vs " + shape_string(va.shape()));
  }
  Tensor<Real> out = va;
  for (std::size_t r = 0; r < va.rows(); ++r) {
    const Real f = factors[r / group];
    Real* row = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) row[c] *= f;
  }
  std::vector<Real> fs(factors.begin(), factors.end());
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a}), [this, ia, self, fs = std::move(fs), group] {
    const auto& d = nodes_[self].grad;
    auto& da = grad_ref(ia);
    const std::size_t cols = d.cols();
    for (std::size_t r = 0; r < d.rows(); ++r) {
      const Real f = fs[r / group];
      for (std::size_t c = 0; c < cols; ++c) da.at(r, c) += d.at(r, c) * f;
    }
  });
}

template <typename Real>
Var Tape<Real>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = node(parts[0]).value.cols();
  std::size_t rows = 0;
  bool needs = false;
  std::vector<std::uint32_t> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    const auto& v = node(p).value;
    require(v.cols() == cols, "concat_rows", node(parts[0]).value.shape(), v.shape());
    rows += v.rows();
    needs = needs || (grad_enabled_ && node(p).requires_grad);
    ids.push_back(p.id);
  }
  Tensor<Real> out = Tensor<Real>::matrix(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto& v = node(p).value;
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    offset += v.size();
  }
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), needs, [this, ids = std::move(ids), self] {
    const auto& d = nodes_[self].grad;
    std::size_t offset = 0;
    for (auto id : ids) {
      const std::size_t n = nodes_[id].value.size();
      if (nodes_[id].requires_grad) {
        auto& g = grad_ref(id);
        for (std::size_t k = 0; k < n; ++k) g[k] += d[offset + k];
      }
      offset += n;
    }
  });
}

template <typename Real>
Var Tape<Real>::slice_rows(Var a, std::size_t begin, std::size_t count) {
  const auto& va = node(a).value;
  if (begin + count > va.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") of " + shape_string(va.shape()));
  }
  const std::size_t cols = va.cols();
  Tensor<Real> out = Tensor<Real>::matrix(count, cols);
  std::copy(va.row(begin), va.row(begin) + count * cols, out.data());
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a}), [this, ia, self, begin] {
    const auto& d = nodes_[self].grad;
    auto& da = grad_ref(ia);
    Real* dst = da.row(begin);
    for (std::size_t k = 0; k < d.size(); ++k) dst[k] += d[k];
  });
}

template <typename Real>
Var Tape<Real>::gather_rows(Var table, std::span<const std::size_t> index) {
  const auto& vt = node(table).value;
  const std::size_t cols = vt.cols();
  Tensor<Real> out = Tensor<Real>::matrix(index.size(), cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= vt.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                       shape_string(vt.shape()));
    }
    std::copy(vt.row(index[i]), vt.row(index[i]) + cols, out.row(i));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const auto it = table.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({table}), [this, it, self, idx = std::move(idx)] {
    const auto& d = nodes_[self].grad;
    auto& dt = grad_ref(it);
    const std::size_t cols = d.cols();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      Real* dst = dt.row(idx[i]);
      const Real* src = d.row(i);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
}

template <typename Real>
Var Tape<Real>::layer_norm(Var x, Var gain, Var bias, Real eps) {
  const auto& vx = node(x).value;
  const auto& vg = node(gain).value;
  const auto& vb = node(bias).value;
  const std::size_t rows = vx.rows(), cols = vx.cols();
  require(vg.size() == cols && vb.size() == cols, "layer_norm", vx.shape(), vg.shape());
  Tensor<Real> out = Tensor<Real>(vx.shape());
  auto xhat = std::make_shared<std::vector<Real>>(vx.size());
  auto rstd = std::make_shared<std::vector<Real>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* in = vx.row(r);
    Real mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<Real>(cols);
    Real var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<Real>(cols);
    const Real rs = Real(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < cols; ++c) {
      const Real h = (in[c] - mean) * rs;
      (*xhat)[r * cols + c] = h;
      out.at(r, c) = h * vg[c] + vb[c];
    }
  }
  const auto ix = x.id, ig = gain.id, ib = bias.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({x, gain, bias}), [this, ix, ig, ib, self, xhat, rstd] {
    const auto& d = nodes_[self].grad;
    const auto& g = nodes_[ig].value;
    const std::size_t rows = d.rows(), cols = d.cols();
    if (nodes_[ig].requires_grad) {
      auto& dg = grad_ref(ig);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dg[c] += d.at(r, c) * (*xhat)[r * cols + c];
    }
    if (nodes_[ib].requires_grad) {
      auto& db = grad_ref(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) db[c] += d.at(r, c);
    }
    if (nodes_[ix].requires_grad) {
      auto& dx = grad_ref(ix);
      for (std::size_t r = 0; r < rows; ++r) {
        Real mean_dh = 0, mean_dh_h = 0;
        for (std::size_t c = 0; c < cols; ++c) {
          const Real dh = d.at(r, c) * g[c];
          mean_dh += dh;
          mean_dh_h += dh * (*xhat)[r * cols + c];
        }
        mean_dh /= static_cast<Real>(cols);
        mean_dh_h /= static_cast<Real>(cols);
        for (std::size_t c = 0; c < cols; ++c) {
          const Real dh = d.at(r, c) * g[c];
          dx.at(r, c) += (*rstd)[r] * (dh - mean_dh - (*xhat)[r * cols + c] * mean_dh_h);
        }
      }
    }
  });
}

template <typename Real>
Var Tape<Real>::softmax(Var x) {
  return masked_softmax(x, {});
}

template <typename Real>
Var Tape<Real>::masked_softmax(Var x, std::span<const std::uint8_t> mask) {
  const auto& vx = node(x).value;
  const std::size_t rows = vx.rows(), cols = vx.cols();
  if (!mask.empty() && mask.size() != vx.size()) {
    throw ShapeError("masked_softmax: mask of " + std::to_string(mask.size()) + " for " +
                     shape_string(vx.shape()));
  }
  auto keep = [&](std::size_t k) { return mask.empty() || mask[k] != 0; };
  Tensor<Real> out = Tensor<Real>(vx.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (keep(r * cols + c)) mx = std::max(mx, vx.at(r, c));
    if (mx == -std::numeric_limits<Real>::infinity()) continue;
    Real total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!keep(r * cols + c)) continue;
      const Real e = std::exp(vx.at(r, c) - mx);
      out.at(r, c) = e;
      total += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= total;
  }
  const auto ix = x.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({x}), [this, ix, self] {
    const auto& d = nodes_[self].grad;
    const auto& y = nodes_[self].value;
    auto& dx = grad_ref(ix);
    const std::size_t rows = d.rows(), cols = d.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += d.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) dx.at(r, c) += y.at(r, c) * (d.at(r, c) - dot);
    }
  });
}

template <typename Real>
Var Tape<Real>::l2_normalize(Var x) {
  constexpr Real kFloor = Real(1e-12);
  const auto& vx = node(x).value;
  const std::size_t rows = vx.rows(), cols = vx.cols();
  Tensor<Real> out = Tensor<Real>(vx.shape());
  auto norms = std::make_shared<std::vector<Real>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    Real ss = 0;
    for (std::size_t c = 0; c < cols; ++c) ss += vx.at(r, c) * vx.at(r, c);
    const Real n = std::max(std::sqrt(ss), kFloor);
    (*norms)[r] = n;
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = vx.at(r, c) / n;
  }
  const auto ix = x.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({x}), [this, ix, self, norms] {
    const auto& d = nodes_[self].grad;
    const auto& y = nodes_[self].value;
    auto& dx = grad_ref(ix);
    const std::size_t rows = d.rows(), cols = d.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real n = (*norms)[r];
      if (n <= kFloor) {
        for (std::size_t c = 0; c < cols; ++c) dx.at(r, c) += d.at(r, c) / n;
        continue;
      }
      Real dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += d.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < cols; ++c) dx.at(r, c) += (d.at(r, c) - y.at(r, c) * dot) / n;
    }
  });
}

template <typename Real>
Var Tape<Real>::cosine_similarity(Var a, Var b) {
  require(node(a).value.cols() == node(b).value.cols(), "cosine_similarity", node(a).value.shape(),
          node(b).value.shape());
  return matmul(l2_normalize(a), l2_normalize(b), false, true);
}

template <typename Real>
Var Tape<Real>::attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t heads,
                          std::span<const std::uint8_t> key_mask) {
  const auto& vq = node(q).value;
  const auto& vk = node(k).value;
  const auto& vv = node(v).value;
  require(vq.shape() == vk.shape() && vq.shape() == vv.shape(), "attention", vq.shape(), vk.shape());
  const std::size_t width = vq.cols();
  if (seq_len == 0 || vq.rows() % seq_len != 0 || heads == 0 || width % heads != 0) {
    throw ShapeError("attention: seq_len " + std::to_string(seq_len) + ", heads " +
                     std::to_string(heads) + " incompatible with " + shape_string(vq.shape()));
  }
  if (!key_mask.empty() && key_mask.size() != vq.rows()) {
    throw ShapeError("attention: key mask of " + std::to_string(key_mask.size()) + " for " +
                     shape_string(vq.shape()));
  }
  const std::size_t batch = vq.rows() / seq_len;
  const std::size_t hd = width / heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  const std::size_t L = seq_len;
  auto probs = std::make_shared<std::vector<Real>>(batch * heads * L * L, Real(0));
  Tensor<Real> out = Tensor<Real>(vq.shape());
  std::vector<Real> scores(L);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      Real* P = probs->data() + ((b * heads + h) * L) * L;
      for (std::size_t i = 0; i < L; ++i) {
        const Real* qi = vq.row(b * L + i) + h * hd;
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          if (!key_mask.empty() && key_mask[b * L + j] == 0) continue;
          const Real* kj = vk.row(b * L + j) + h * hd;
          Real s = 0;
          for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
          scores[j] = s * scale;
          mx = std::max(mx, scores[j]);
        }
        if (mx == -std::numeric_limits<Real>::infinity()) continue;
        Real total = 0;
        for (std::size_t j = 0; j < L; ++j) {
          if (!key_mask.empty() && key_mask[b * L + j] == 0) continue;
          P[i * L + j] = std::exp(scores[j] - mx);
          total += P[i * L + j];
        }
        Real* oi = out.row(b * L + i) + h * hd;
        for (std::size_t j = 0; j < L; ++j) {
          P[i * L + j] /= total;
          const Real p = P[i * L + j];
          if (p == Real(0)) continue;
          const Real* vj = vv.row(b * L + j) + h * hd;
          for (std::size_t c = 0; c < hd; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }
  const auto iq = q.id, ik = k.id, iv = v.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({q, k, v}),
              [this, iq, ik, iv, self, probs, batch, heads, hd, L, scale] {
                const auto& d = nodes_[self].grad;
                const auto& vq = nodes_[iq].value;
                const auto& vk = nodes_[ik].value;
                const auto& vv = nodes_[iv].value;
                auto& dq = grad_ref(iq);
                auto& dk = grad_ref(ik);
                auto& dv = grad_ref(iv);
                std::vector<Real> dp(L);
                for (std::size_t b = 0; b < batch; ++b) {
                  for (std::size_t h = 0; h < heads; ++h) {
                    const Real* P = probs->data() + ((b * heads + h) * L) * L;
                    for (std::size_t i = 0; i < L; ++i) {
                      const Real* doi = d.row(b * L + i) + h * hd;
                      Real dot = 0;
                      for (std::size_t j = 0; j < L; ++j) {
                        const Real p = P[i * L + j];
                        if (p == Real(0)) {
                          dp[j] = 0;
                          continue;
                        }
                        const Real* vj = vv.row(b * L + j) + h * hd;
                        Real* dvj = dv.row(b * L + j) + h * hd;
                        Real s = 0;
                        for (std::size_t c = 0; c < hd; ++c) {
                          s += doi[c] * vj[c];
                          dvj[c] += p * doi[c];
                        }
                        dp[j] = s;
                        dot += p * s;
                      }
                      const Real* qi = vq.row(b * L + i) + h * hd;
                      Real* dqi = dq.row(b * L + i) + h * hd;
                      for (std::size_t j = 0; j < L; ++j) {
                        const Real p = P[i * L + j];
                        if (p == Real(0)) continue;
                        const Real ds = p * (dp[j] - dot) * scale;
                        const Real* kj = vk.row(b * L + j) + h * hd;
                        Real* dkj = dk.row(b * L + j) + h * hd;
                        for (std::size_t c = 0; c < hd; ++c) {
                          dqi[c] += ds * kj[c];
                          dkj[c] += ds * qi[c];
                        }
                      }
                    }
                  }
                }
              });
}

template <typename Real>
Var Tape<Real>::sum(Var a) {
  Real total = 0;
  for (Real x : node(a).value.values()) total += x;
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(Tensor<Real>::scalar(total), any_requires({a}), [this, ia, self] {
    const Real g = nodes_[self].grad[0];
    auto& da = grad_ref(ia);
    for (auto& x : da.values()) x += g;
  });
}

template <typename Real>
Var Tape<Real>::mean(Var a) {
  const auto n = static_cast<Real>(node(a).value.size());
  return scale(sum(a), Real(1) / n);
}

template <typename Real>
Var Tape<Real>::mean_rows(Var a, std::size_t group, std::span<const std::uint8_t> row_mask) {
  const auto& va = node(a).value;
  const std::size_t rows = va.rows(), cols = va.cols();
  if (group == 0 || rows % group != 0 || (!row_mask.empty() && row_mask.size() != rows)) {
    throw ShapeError("mean_rows: group " + std::to_string(group) + " mask " +
                     std::to_string(row_mask.size()) + " for " + shape_string(va.shape()));
  }
  const std::size_t groups = rows / group;
  auto inv = std::make_shared<std::vector<Real>>(groups, Real(0));
  std::vector<std::uint8_t> mask(row_mask.begin(), row_mask.end());
  if (mask.empty()) mask.assign(rows, 1);
  Tensor<Real> out = Tensor<Real>::matrix(groups, cols);
  for (std::size_t g = 0; g < groups; ++g) {
    std::size_t count = 0;
    for (std::size_t r = g * group; r < (g + 1) * group; ++r) {
      if (!mask[r]) continue;
      ++count;
      for (std::size_t c = 0; c < cols; ++c) out.at(g, c) += va.at(r, c);
    }
    if (count == 0) continue;
    (*inv)[g] = Real(1) / static_cast<Real>(count);
    for (std::size_t c = 0; c < cols; ++c) out.at(g, c) *= (*inv)[g];
  }
  const auto ia = a.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(std::move(out), any_requires({a}),
              [this, ia, self, inv, mask = std::move(mask), group] {
                const auto& d = nodes_[self].grad;
                auto& da = grad_ref(ia);
                const std::size_t cols = d.cols();
                for (std::size_t r = 0; r < mask.size(); ++r) {
                  if (!mask[r]) continue;
                  const std::size_t g = r / group;
                  for (std::size_t c = 0; c < cols; ++c) da.at(r, c) += d.at(g, c) * (*inv)[g];
                }
              });
}

template <typename Real>
Var Tape<Real>::cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const auto& vx = node(logits).value;
  const std::size_t rows = vx.rows(), cols = vx.cols();
  if (targets.size() != rows || rows == 0) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     shape_string(vx.shape()));
  }
  auto probs = std::make_shared<std::vector<Real>>(vx.size());
  Real total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[r]) + " >= " +
                       std::to_string(cols) + " classes");
    }
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, vx.at(r, c));
    Real z = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      (*probs)[r * cols + c] = std::exp(vx.at(r, c) - mx);
      z += (*probs)[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) (*probs)[r * cols + c] /= z;
    total += mx + std::log(z) - vx.at(r, targets[r]);
  }
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  const auto ix = logits.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(Tensor<Real>::scalar(total / static_cast<Real>(rows)), any_requires({logits}),
              [this, ix, self, probs, tg = std::move(tg)] {
                const Real g = nodes_[self].grad[0];
                auto& dx = grad_ref(ix);
                const std::size_t rows = dx.rows(), cols = dx.cols();
                const Real s = g / static_cast<Real>(rows);
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t c = 0; c < cols; ++c) {
                    const Real onehot = c == tg[r] ? Real(1) : Real(0);
                    dx.at(r, c) += s * ((*probs)[r * cols + c] - onehot);
                  }
                }
              });
}

template <typename Real>
Var Tape<Real>::kl_divergence(Var p_logits, Var q_logits) {
  const auto& vp = node(p_logits).value;
  const auto& vq = node(q_logits).value;
  require(vp.shape() == vq.shape() && vp.rows() > 0, "kl_divergence", vp.shape(), vq.shape());
  const std::size_t rows = vp.rows(), cols = vp.cols();
  auto logp = std::make_shared<std::vector<Real>>(vp.size());
  auto logq = std::make_shared<std::vector<Real>>(vp.size());
  auto row_kl = std::make_shared<std::vector<Real>>(rows);
  auto log_softmax = [cols](const Real* x, Real* out) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x[c]);
    Real z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const Real lz = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[c] = x[c] - lz;
  };
  Real total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    log_softmax(vp.row(r), logp->data() + r * cols);
    log_softmax(vq.row(r), logq->data() + r * cols);
    Real kl = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const Real lp = (*logp)[r * cols + c];
      kl += std::exp(lp) * (lp - (*logq)[r * cols + c]);
    }
    (*row_kl)[r] = kl;
    total += kl;
  }
  const auto ip = p_logits.id, iq = q_logits.id;
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  return push(Tensor<Real>::scalar(total / static_cast<Real>(rows)),
              any_requires({p_logits, q_logits}), [this, ip, iq, self, logp, logq, row_kl] {
                const Real g = nodes_[self].grad[0];
                const auto& shape = nodes_[ip].value.shape();
                const std::size_t cols = shape.back();
                const std::size_t rows = logp->size() / cols;
                const Real s = g / static_cast<Real>(rows);
                if (nodes_[ip].requires_grad) {
                  auto& dp = grad_ref(ip);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      const std::size_t k = r * cols + c;
                      const Real p = std::exp((*logp)[k]);
                      dp[k] += s * p * ((*logp)[k] - (*logq)[k] - (*row_kl)[r]);
                    }
                  }
                }
                if (nodes_[iq].requires_grad) {
                  auto& dq = grad_ref(iq);
                  for (std::size_t k = 0; k < dq.size(); ++k) {
                    dq[k] += s * (std::exp((*logq)[k]) - std::exp((*logp)[k]));
                  }
                }
              });
}

template class Tape<float>;
template class Tape<double>;

}  // namespace kclip::nn
