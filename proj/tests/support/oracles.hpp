// SPDX-License-Identifier: Apache-2.0
//
// Naive-loop reference implementations of the objectives. They share no
// code with the tape and are written for clarity, not speed.

#ifndef KCLIP_TESTS_SUPPORT_ORACLES_HPP_
#define KCLIP_TESTS_SUPPORT_ORACLES_HPP_

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "kclip/nn/tensor.hpp"

namespace kclip::testing {

using Matrix = std::vector<std::vector<double>>;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, std::vector<double>(cols));
  for (auto& row : m)
    for (auto& x : row) x = n(rng);
  return m;
}

inline nn::Tensor<double> to_tensor(const Matrix& m) {
  auto t = nn::Tensor<double>::matrix(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) t.at(i, j) = m[i][j];
  return t;
}

inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// -log softmax(row)[target]
inline double oracle_nll(const std::vector<double>& row, std::size_t target) {
  double z = 0;
  for (double x : row) z += std::exp(x);
  return std::log(z) - row[target];
}

inline Matrix oracle_similarity(const Matrix& a, const Matrix& b, double tau) {
  Matrix s(a.size(), std::vector<double>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) s[i][j] = oracle_cosine(a[i], b[j]) / tau;
  return s;
}

/// Rows are anchors a_i; positives b_i.
inline double oracle_infonce(const Matrix& a, const Matrix& b, double tau) {
  const Matrix s = oracle_similarity(a, b, tau);
  double loss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) loss += oracle_nll(s[i], i);
  return loss / static_cast<double>(a.size());
}

inline double oracle_clip(const Matrix& image, const Matrix& text, double tau) {
  return 0.5 * (oracle_infonce(image, text, tau) + oracle_infonce(text, image, tau));
}

inline double oracle_e2e(const Matrix& tails, const Matrix& heads_relations, double tau) {
  return oracle_infonce(tails, heads_relations, tau);
}

inline double oracle_g2e(const Matrix& y, const Matrix& g, double tau) {
  return oracle_infonce(y, g, tau);
}

inline double oracle_e2r(const Matrix& logits, const std::vector<std::size_t>& relations) {
  double loss = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) loss += oracle_nll(logits[i], relations[i]);
  return loss / static_cast<double>(logits.size());
}

inline std::vector<double> oracle_softmax(const std::vector<double>& row) {
  double z = 0;
  for (double x : row) z += std::exp(x);
  std::vector<double> p;
  for (double x : row) p.push_back(std::exp(x) / z);
  return p;
}

inline double oracle_kl_rows(const Matrix& p_logits, const Matrix& q_logits) {
  double total = 0;
  for (std::size_t i = 0; i < p_logits.size(); ++i) {
    const auto p = oracle_softmax(p_logits[i]);
    const auto q = oracle_softmax(q_logits[i]);
    for (std::size_t j = 0; j < p.size(); ++j) total += p[j] * std::log(p[j] / q[j]);
  }
  return total / static_cast<double>(p_logits.size());
}

inline Matrix oracle_transpose(const Matrix& m) {
  Matrix t(m[0].size(), std::vector<double>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) t[j][i] = m[i][j];
  return t;
}

inline double oracle_kd(const Matrix& student, double tau_s, const Matrix& teacher, double tau_t) {
  Matrix s = student, t = teacher;
  for (auto& row : s)
    for (auto& x : row) x /= tau_s;
  for (auto& row : t)
    for (auto& x : row) x /= tau_t;
  return 0.5 * (oracle_kl_rows(t, s) + oracle_kl_rows(oracle_transpose(t), oracle_transpose(s)));
}

/// Hand-rolled propagation: for each layer and each entity, collect its
/// incoming edges, weight them by softmax of R_e . w, and sum head features.
inline Matrix oracle_gnn(const Matrix& y0, const Matrix& relations,
                         const std::vector<std::size_t>& heads,
                         const std::vector<std::size_t>& tails, const Matrix& weights) {
  Matrix g = y0;
  for (const auto& w : weights) {
    Matrix next = g;
    for (std::size_t t = 0; t < g.size(); ++t) {
      std::vector<std::size_t> in;
      for (std::size_t e = 0; e < tails.size(); ++e)
        if (tails[e] == t) in.push_back(e);
      if (in.empty()) continue;
      std::vector<double> score;
      for (std::size_t e : in) {
        double a = 0;
        for (std::size_t k = 0; k < w.size(); ++k) a += relations[e][k] * w[k];
        score.push_back(a);
      }
      const auto alpha = oracle_softmax(score);
      for (auto& x : next[t]) x = 0;
      for (std::size_t i = 0; i < in.size(); ++i)
        for (std::size_t k = 0; k < next[t].size(); ++k) next[t][k] += alpha[i] * g[heads[in[i]]][k];
    }
    g = std::move(next);
  }
  return g;
}

}  // namespace kclip::testing

#endif  // KCLIP_TESTS_SUPPORT_ORACLES_HPP_
