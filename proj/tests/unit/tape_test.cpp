// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/op_cases.hpp"
#include "kclip/nn/grad_check.hpp"
#include "kclip/nn/tape.hpp"

namespace kclip::nn {
namespace {

using testing::random_tensor;

TEST(TapeTest, SoftmaxOverSingleElementIsOne) {
  Tape<double> tape;
  Var y = tape.softmax(tape.constant(Tensor<double>({1, 1}, {3.7})));
  EXPECT_EQ(tape.value(y)[0], 1.0);
}

TEST(TapeTest, SoftmaxRowsSumToOneForLargeLogits) {
  Tape<float> tape;
  Var y = tape.softmax(tape.constant(Tensor<float>({2, 3}, {1000.f, 999.f, -1000.f, 0.f, 0.f, 0.f})));
  for (std::size_t r = 0; r < 2; ++r) {
    float total = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_TRUE(std::isfinite(tape.value(y).at(r, c)));
      total += tape.value(y).at(r, c);
    }
    EXPECT_NEAR(total, 1.0f, 1e-6f);
  }
}

TEST(TapeTest, CosineOfVectorWithItselfIsOne) {
  std::mt19937_64 rng(3);
  Tape<double> tape;
  Var x = tape.constant(random_tensor({1, 7}, rng));
  EXPECT_NEAR(tape.value(tape.cosine_similarity(x, x))[0], 1.0, 1e-6);
}

TEST(TapeTest, LayerNormOfConstantRowIsZero) {
  Tape<double> tape;
  Var x = tape.constant(Tensor<double>({1, 4}, 2.5));
  Var g = tape.constant(Tensor<double>({4}, 1.0));
  Var b = tape.constant(Tensor<double>({4}, 0.0));
  const auto& y = tape.value(tape.layer_norm(x, g, b));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(TapeTest, L2NormalizedRowsHaveUnitNorm) {
  std::mt19937_64 rng(5);
  Tape<float> tape;
  Var y = tape.l2_normalize(tape.constant(random_tensor({4, 9}, rng, 30.0).cast<float>()));
  for (std::size_t r = 0; r < 4; ++r) {
    double ss = 0;
    for (std::size_t c = 0; c < 9; ++c) ss += tape.value(y).at(r, c) * tape.value(y).at(r, c);
    EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-6);
  }
}

TEST(TapeTest, ShapeMismatchNamesOpAndShapes) {
  Tape<double> tape;
  Var a = tape.constant(Tensor<double>({2, 3}));
  Var b = tape.constant(Tensor<double>({2, 3}));
  try {
    tape.matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
  }
}

TEST(TapeTest, SumGradientIsAllOnes) {
  Tape<double> tape;
  Var x = tape.leaf(Tensor<double>({2, 3}, 0.3));
  tape.backward(tape.sum(x));
  const auto grad = tape.grad(x);
  for (double g : grad.values()) EXPECT_EQ(g, 1.0);
}

TEST(TapeTest, BackwardRejectsNonScalar) {
  Tape<double> tape;
  Var x = tape.leaf(Tensor<double>({2, 3}, 0.3));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(TapeTest, CosineGradientIsOrthogonalToInput) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto xv = random_tensor({1, 6}, rng);
    Tape<double> tape;
    Var x = tape.leaf(xv);
    Var fixed = tape.constant(xv);
    tape.backward(tape.sum(tape.cosine_similarity(x, fixed)));
    const auto g = tape.grad(x);
    double dot = 0;
    for (std::size_t k = 0; k < 6; ++k) dot += g[k] * xv[k];
    EXPECT_NEAR(dot, 0.0, 1e-5);
  }
}

TEST(TapeTest, UnreachableParameterGetsExactZero) {
  ParameterStore<double> store;
  auto& used = store.add("used", Tensor<double>({2}, 1.0), ParamGroup::kFusion, true);
  auto& unused = store.add("unused", Tensor<double>({2}, 1.0), ParamGroup::kFusion, true);
  Tape<double> tape;
  Var u = tape.parameter(used);
  tape.parameter(unused);
  tape.backward(tape.sum(tape.mul(u, u)));
  EXPECT_EQ(used.grad[0], 2.0);
  EXPECT_EQ(unused.grad[0], 0.0);
  EXPECT_EQ(unused.grad[1], 0.0);
}

TEST(TapeTest, ParameterUsedTwiceAccumulates) {
  ParameterStore<double> store;
  auto& p = store.add("p", Tensor<double>({1}, 3.0), ParamGroup::kFusion, false);
  Tape<double> tape;
  Var a = tape.parameter(p);
  Var b = tape.parameter(p);
  EXPECT_EQ(a.id, b.id);
  tape.backward(tape.sum(tape.mul(a, b)));
  EXPECT_EQ(p.grad[0], 6.0);
}

TEST(TapeTest, SingleKeyAttentionReturnsValues) {
  std::mt19937_64 rng(2);
  Tape<double> tape;
  Var q = tape.constant(random_tensor({3, 4}, rng));
  Var k = tape.constant(random_tensor({3, 4}, rng));
  Var v = tape.constant(random_tensor({3, 4}, rng));
  Var out = tape.attention(q, k, v, 1, 2);
  EXPECT_EQ(tape.value(out), tape.value(v));
}

TEST(TapeTest, MaskedKeysDoNotInfluenceOutput) {
  std::mt19937_64 rng(9);
  auto q = random_tensor({4, 4}, rng);
  auto k = random_tensor({4, 4}, rng);
  auto v = random_tensor({4, 4}, rng);
  const std::vector<std::uint8_t> mask{1, 1, 1, 0};
  Tape<double> t1;
  auto out1 = t1.value(t1.attention(t1.constant(q), t1.constant(k), t1.constant(v), 4, 2, mask));
  for (std::size_t c = 0; c < 4; ++c) {
    k.at(3, c) = 100.0;
    v.at(3, c) = -50.0;
  }
  Tape<double> t2;
  auto out2 = t2.value(t2.attention(t2.constant(q), t2.constant(k), t2.constant(v), 4, 2, mask));
  EXPECT_EQ(out1, out2);
}

TEST(TapeTest, DeterministicAcrossRuns) {
  auto run = [] {
    std::mt19937_64 rng(21);
    Tape<float> tape;
    Var x = tape.constant(random_tensor({6, 8}, rng).cast<float>());
    Var y = tape.attention(x, x, x, 3, 2);
    return tape.value(tape.gelu(tape.matmul(y, x, false, true)));
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheckTest, HalfSquaredNormIsExact) {
  std::mt19937_64 rng(1);
  auto report = grad_check(
      [](Tape<double>& t, std::span<const Var> in) {
        return t.scale(t.sum(t.mul(in[0], in[0])), 0.5);
      },
      {random_tensor({3, 3}, rng)});
  EXPECT_LT(report.max_rel_err, 1e-9);
  EXPECT_EQ(report.coordinates, 9u);
}

TEST(GradCheckTest, SoftmaxKlPair) {
  std::mt19937_64 rng(4);
  auto report = grad_check(
      [](Tape<double>& t, std::span<const Var> in) {
        Var p = t.softmax(in[0]);
        return t.kl_divergence(t.scale(p, 3.0), in[1]);
      },
      {random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)});
  EXPECT_LT(report.max_rel_err, 1e-6);
}

TEST(GradCheckTest, TwoLayerMlpCrossEntropy) {
  std::mt19937_64 rng(8);
  auto report = grad_check(
      [](Tape<double>& t, std::span<const Var> in) {
        Var h = t.gelu(t.add(t.matmul(in[0], in[1]), in[2]));
        Var logits = t.add(t.matmul(h, in[3]), in[4]);
        const std::vector<std::size_t> targets{0, 2, 1, 2};
        return t.cross_entropy(logits, targets);
      },
      {random_tensor({4, 5}, rng), random_tensor({5, 6}, rng), random_tensor({1, 6}, rng),
       random_tensor({6, 3}, rng), random_tensor({1, 3}, rng)});
  EXPECT_LT(report.max_rel_err, 1e-5);
}

class OpGradientTest : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(OpGradientTest, EveryOpMatchesCentralDifferences) {
  for (auto& c : testing::op_cases(GetParam())) {
    auto report = grad_check(c.fn, c.inputs, 1e-4);
    EXPECT_LT(report.max_rel_err, 1e-4) << c.name << " worst at " << report.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradientTest, ::testing::Range<std::uint64_t>(0, 20));

}  // namespace
}  // namespace kclip::nn
