// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "../support/oracles.hpp"
#include "kclip/errors.hpp"
#include "kclip/nn/grad_check.hpp"
#include "kclip/objectives/losses.hpp"

namespace kclip::objectives {
namespace {

using nn::Tape;
using nn::Tensor;
using testing::Matrix;
using testing::random_matrix;
using testing::to_tensor;

constexpr double kTol = 1e-6;

Var log_tau(Tape<double>& tape, double tau) {
  return tape.constant(Tensor<double>::scalar(std::log(tau)));
}

Matrix identical_rows(std::size_t n, std::size_t d) {
  return Matrix(n, std::vector<double>(d, 0.75));
}

// -- clip --------------------------------------------------------------------

TEST(ClipLoss, SingleRowIsZero) {
  std::mt19937_64 rng(1);
  Tape<double> t;
  Var a = t.constant(to_tensor(random_matrix(1, 5, rng)));
  Var b = t.constant(to_tensor(random_matrix(1, 5, rng)));
  EXPECT_NEAR(t.value(clip_loss(t, a, b, log_tau(t, 0.07))).item(), 0.0, kTol);
}

TEST(ClipLoss, UniformSimilarityIsLogN) {
  Tape<double> t;
  Var a = t.constant(to_tensor(identical_rows(4, 3)));
  EXPECT_NEAR(t.value(clip_loss(t, a, a, log_tau(t, 0.07))).item(), 1.3862943611198906, kTol);
}

TEST(ClipLoss, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(3, 6, rng), b = random_matrix(3, 6, rng);
  Tape<double> t;
  const double got =
      t.value(clip_loss(t, t.constant(to_tensor(a)), t.constant(to_tensor(b)), log_tau(t, 0.3)))
          .item();
  EXPECT_NEAR(got, testing::oracle_clip(a, b, 0.3), kTol);
}

TEST(ClipLoss, EmptyBatchRejected) {
  Tape<double> t;
  Var e = t.constant(Tensor<double>::matrix(0, 3));
  EXPECT_THROW(clip_loss(t, e, e, log_tau(t, 1.0)), std::invalid_argument);
}

// -- e2e ---------------------------------------------------------------------

TEST(E2eLoss, SingleTripletIsZero) {
  std::mt19937_64 rng(3);
  Tape<double> t;
  Var a = t.constant(to_tensor(random_matrix(1, 4, rng)));
  Var b = t.constant(to_tensor(random_matrix(1, 4, rng)));
  EXPECT_NEAR(t.value(e2e_loss(t, a, b, log_tau(t, 0.07))).item(), 0.0, kTol);
}

TEST(E2eLoss, EqualCosinesIsLogFour) {
  Tape<double> t;
  Var a = t.constant(to_tensor(identical_rows(4, 8)));
  EXPECT_NEAR(t.value(e2e_loss(t, a, a, log_tau(t, 0.07))).item(), 1.3862943611198906, kTol);
}

TEST(E2eLoss, MatchesLoopOracle) {
  std::mt19937_64 rng(4);
  const Matrix tails = random_matrix(3, 5, rng), hr = random_matrix(3, 5, rng);
  Tape<double> t;
  const double got = t.value(e2e_loss(t, t.constant(to_tensor(tails)), t.constant(to_tensor(hr)),
                                      log_tau(t, 0.07)))
                         .item();
  EXPECT_NEAR(got, testing::oracle_e2e(tails, hr, 0.07), kTol);
}

TEST(E2eLoss, AnchorsAreTails) {
  // Swapping the roles changes the softmax axis, so the loss must differ on
  // a non-symmetric similarity matrix.
  std::mt19937_64 rng(5);
  const Matrix a = random_matrix(4, 5, rng), b = random_matrix(4, 5, rng);
  Tape<double> t;
  Var va = t.constant(to_tensor(a)), vb = t.constant(to_tensor(b));
  const double ab = t.value(e2e_loss(t, va, vb, log_tau(t, 0.2))).item();
  EXPECT_NEAR(ab, testing::oracle_infonce(a, b, 0.2), kTol);
  EXPECT_GT(std::abs(ab - testing::oracle_infonce(b, a, 0.2)), 1e-6);
}

// -- e2r ---------------------------------------------------------------------

TEST(E2rLoss, UniformLogitsOverThirteenRelations) {
  Tape<double> t;
  Var logits = t.constant(Tensor<double>::matrix(3, 13, 0.25));
  const std::vector<std::size_t> rel{0, 7, 12};
  EXPECT_NEAR(t.value(e2r_loss(t, logits, rel)).item(), 2.564949357461537, kTol);
}

TEST(E2rLoss, SaturatedLogitsGiveNearZero) {
  Tape<double> t;
  auto m = Tensor<double>::matrix(2, 4);
  m.at(0, 1) = 1e6;
  m.at(1, 3) = 1e6;
  const std::vector<std::size_t> rel{1, 3};
  EXPECT_LT(t.value(e2r_loss(t, t.constant(m), rel)).item(), 1e-6);
}

TEST(E2rLoss, MatchesLoopOracle) {
  std::mt19937_64 rng(6);
  const Matrix logits = random_matrix(5, 4, rng);
  const std::vector<std::size_t> rel{0, 3, 1, 1, 2};
  Tape<double> t;
  EXPECT_NEAR(t.value(e2r_loss(t, t.constant(to_tensor(logits)), rel)).item(),
              testing::oracle_e2r(logits, rel), kTol);
}

TEST(E2rLoss, RelationOutOfRange) {
  Tape<double> t;
  const std::vector<std::size_t> rel{4};
  EXPECT_THROW(e2r_loss(t, t.constant(Tensor<double>::matrix(1, 4)), rel), std::out_of_range);
}

// -- gnn ---------------------------------------------------------------------

Var weight_var(Tape<double>& t, const std::vector<double>& w) {
  return t.constant(Tensor<double>({w.size(), 1}, w));
}

TEST(Gnn, IsolatedEntityKeepsItsFeatureExactly) {
  std::mt19937_64 rng(7);
  const Matrix y0 = random_matrix(3, 4, rng), r = random_matrix(1, 4, rng);
  Subgraph g{3, {0}, {1}};
  Tape<double> t;
  const Var ws[] = {weight_var(t, {0.1, -0.3, 0.2, 0.5}), weight_var(t, {1, 1, 1, 1})};
  const auto out =
      t.value(gnn_propagate(t, g, t.constant(to_tensor(y0)), t.constant(to_tensor(r)), ws));
  for (std::size_t e : {0, 2})
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(out.at(e, k), y0[e][k]);
}

TEST(Gnn, SingleIncomingEdgeCopiesHead) {
  std::mt19937_64 rng(8);
  const Matrix y0 = random_matrix(2, 4, rng), r = random_matrix(1, 4, rng);
  Subgraph g{2, {0}, {1}};
  Tape<double> t;
  const Var ws[] = {weight_var(t, {2, -1, 0.5, 3})};
  const auto out =
      t.value(gnn_propagate(t, g, t.constant(to_tensor(y0)), t.constant(to_tensor(r)), ws));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out.at(1, k), y0[0][k], 1e-15);
}

TEST(Gnn, ChainOfThreeMatchesLoopOracle) {
  std::mt19937_64 rng(9);
  const Matrix y0 = random_matrix(3, 5, rng), r = random_matrix(2, 5, rng);
  const Matrix w = random_matrix(2, 5, rng);
  Subgraph g{3, {0, 1}, {1, 2}};
  Tape<double> t;
  const Var ws[] = {weight_var(t, w[0]), weight_var(t, w[1])};
  const auto out =
      t.value(gnn_propagate(t, g, t.constant(to_tensor(y0)), t.constant(to_tensor(r)), ws));
  const auto want = testing::oracle_gnn(y0, r, g.heads, g.tails, w);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(out.at(i, k), want[i][k], kTol);
}

TEST(Gnn, RandomGraphsMatchLoopOracle) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 1 + rng() % 6, edges = rng() % 9, layers = 1 + rng() % 3, d = 4;
    Subgraph g{n, {}, {}};
    for (std::size_t e = 0; e < edges; ++e) {
      g.heads.push_back(rng() % n);
      g.tails.push_back(rng() % n);
    }
    const Matrix y0 = random_matrix(n, d, rng), r = random_matrix(std::max<std::size_t>(edges, 1), d, rng);
    const Matrix w = random_matrix(layers, d, rng);
    Tape<double> t;
    std::vector<Var> ws;
    for (const auto& row : w) ws.push_back(weight_var(t, row));
    Var rv = t.constant(to_tensor(Matrix(r.begin(), r.begin() + static_cast<long>(edges ? edges : 1))));
    const auto out = t.value(gnn_propagate(t, g, t.constant(to_tensor(y0)), rv, ws));
    const auto want = testing::oracle_gnn(y0, r, g.heads, g.tails, edges ? w : Matrix{});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(out.at(i, k), want[i][k], kTol) << seed;
  }
}

// -- g2e ---------------------------------------------------------------------

TEST(G2eLoss, SingleEntityIsZero) {
  std::mt19937_64 rng(10);
  Tape<double> t;
  Var y = t.constant(to_tensor(random_matrix(1, 4, rng)));
  Var g = t.constant(to_tensor(random_matrix(1, 4, rng)));
  EXPECT_NEAR(t.value(g2e_loss(t, y, g, log_tau(t, 0.07))).item(), 0.0, kTol);
}

TEST(G2eLoss, UniformOverFiveIsLogFive) {
  Tape<double> t;
  Var y = t.constant(to_tensor(identical_rows(5, 3)));
  EXPECT_NEAR(t.value(g2e_loss(t, y, y, log_tau(t, 0.07))).item(), 1.6094379124341003, kTol);
}

TEST(G2eLoss, OrthogonalIdentityMatchesOracle) {
  Matrix y(4, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < 4; ++i) y[i][i] = 1.0 + static_cast<double>(i);
  Tape<double> t;
  Var v = t.constant(to_tensor(y));
  const double got = t.value(g2e_loss(t, v, v, log_tau(t, 1.0))).item();
  // Per entity: -log(e / (e + 3)).
  EXPECT_NEAR(got, testing::oracle_g2e(y, y, 1.0), kTol);
  EXPECT_NEAR(got, std::log(std::exp(1.0) + 3.0) - 1.0, kTol);
}

// -- kd ----------------------------------------------------------------------

TEST(KdLoss, StudentEqualsTeacherIsZero) {
  std::mt19937_64 rng(11);
  const Matrix s = random_matrix(4, 4, rng);
  Tape<double> t;
  EXPECT_NEAR(t.value(kd_loss(t, t.constant(to_tensor(s)), log_tau(t, 0.07), to_tensor(s), 0.07))
                  .item(),
              0.0, kTol);
}

TEST(KdLoss, NonNegativeOverSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const Matrix s = random_matrix(3, 3, rng), te = random_matrix(3, 3, rng);
    Tape<double> t;
    EXPECT_GE(
        t.value(kd_loss(t, t.constant(to_tensor(s)), log_tau(t, 0.5), to_tensor(te), 0.7)).item(),
        0.0)
        << seed;
  }
}

TEST(KdLoss, MatchesLoopOracle) {
  std::mt19937_64 rng(12);
  const Matrix s = random_matrix(3, 3, rng), te = random_matrix(3, 3, rng);
  Tape<double> t;
  EXPECT_NEAR(
      t.value(kd_loss(t, t.constant(to_tensor(s)), log_tau(t, 0.4), to_tensor(te), 0.9)).item(),
      testing::oracle_kd(s, 0.4, te, 0.9), kTol);
}

TEST(KdLoss, ShapeMismatch) {
  Tape<double> t;
  EXPECT_THROW(kd_loss(t, t.constant(Tensor<double>::matrix(2, 2)), log_tau(t, 1.0),
                       Tensor<double>::matrix(3, 3), 1.0),
               nn::ShapeError);
}

// -- total -------------------------------------------------------------------

TEST(TotalLoss, SumsAndEchoes) {
  const auto zero = total_loss(0, 0, 0, 0);
  EXPECT_EQ(zero.total, 0.0);
  const auto r = total_loss(1, 2, 3, 4, 9);
  EXPECT_EQ(r.total, 10.0);
  EXPECT_EQ(r.e2e, 1.0);
  EXPECT_EQ(r.e2r, 2.0);
  EXPECT_EQ(r.g2e, 3.0);
  EXPECT_EQ(r.kd, 4.0);
  EXPECT_EQ(r.clip_baseline, 9.0);
}

TEST(TotalLoss, NanAborts) {
  EXPECT_THROW(total_loss(0, std::numeric_limits<double>::quiet_NaN(), 0, 0), NumericError);
}

// -- gradients ---------------------------------------------------------------

class LossGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(LossGradients, EveryLossPassesFiniteDifferences) {
  const std::uint64_t seed = GetParam();
  std::mt19937_64 rng(seed);
  const std::size_t n = 2 + seed % 4, d = 3 + seed % 5;
  auto mat = [&](std::size_t r, std::size_t c) { return to_tensor(random_matrix(r, c, rng)); };
  const Tensor<double> tau = Tensor<double>::scalar(std::log(0.5));

  auto check = [&](const char* name, const nn::TensorFunction& f,
                   std::vector<Tensor<double>> inputs) {
    const auto rep = nn::grad_check(f, std::move(inputs));
    EXPECT_LT(rep.max_rel_err, 1e-4) << name << " worst " << rep.worst;
  };
  check("clip", [](Tape<double>& t, std::span<const Var> in) {
    return clip_loss(t, in[0], in[1], in[2]);
  }, {mat(n, d), mat(n, d), tau});
  check("e2e", [](Tape<double>& t, std::span<const Var> in) {
    return e2e_loss(t, in[0], in[1], in[2]);
  }, {mat(n, d), mat(n, d), tau});
  std::vector<std::size_t> rel;
  for (std::size_t i = 0; i < n; ++i) rel.push_back(rng() % 4);
  check("e2r", [rel](Tape<double>& t, std::span<const Var> in) {
    return e2r_loss(t, in[0], rel);
  }, {mat(n, 4)});
  check("g2e", [](Tape<double>& t, std::span<const Var> in) {
    return g2e_loss(t, in[0], in[1], in[2]);
  }, {mat(n, d), mat(n, d), tau});
  const Tensor<double> teacher = mat(n, n);
  check("kd", [teacher](Tape<double>& t, std::span<const Var> in) {
    return kd_loss(t, in[0], in[1], teacher, 0.6);
  }, {mat(n, n), tau});
  Subgraph g{n, {}, {}};
  for (std::size_t e = 0; e < n; ++e) {
    g.heads.push_back(rng() % n);
    g.tails.push_back(rng() % n);
  }
  check("gnn+g2e", [g](Tape<double>& t, std::span<const Var> in) {
    const Var ws[] = {in[2], in[3]};
    Var out = gnn_propagate(t, g, in[0], in[1], ws);
    return g2e_loss(t, in[0], out, in[4]);
  }, {mat(n, d), mat(n, d), mat(d, 1), mat(d, 1), tau});
}

INSTANTIATE_TEST_SUITE_P(Seeds, LossGradients, ::testing::Range<std::uint64_t>(0, 20));

TEST(RelationHead, OutputWidthIsRelationCount) {
  nn::ParameterStore<double> store;
  std::mt19937_64 rng(13);
  RelationHead<double> head(store, 8, 13, rng);
  Tape<double> t;
  EXPECT_EQ(t.shape(head(t, t.constant(Tensor<double>::matrix(3, 8)))), (nn::Shape{3, 13}));
}

}  // namespace
}  // namespace kclip::objectives
