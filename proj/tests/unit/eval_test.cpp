// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../support/tiny.hpp"
#include "kclip/eval/eval.hpp"
#include "kclip/kg/synth.hpp"

namespace kclip::eval {
namespace {

const std::size_t kKs[] = {1, 5, 8};

nn::Tensor<double> identity(std::size_t n) {
  auto t = nn::Tensor<double>::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

TEST(Retrieval, IdentitySimilarityIsPerfect) {
  const auto r = rank_retrieval(identity(8), kKs, "text_to_image");
  for (double x : r.recall) EXPECT_EQ(x, 1.0);
}

TEST(Retrieval, ConstantScoresGiveOneOverN) {
  const auto r = rank_retrieval(nn::Tensor<double>::matrix(8, 8, 0.3), kKs, "image_to_text");
  // Only query 0 wins the tie at rank 0; query i sits at rank i.
  EXPECT_EQ(r.recall[0], 1.0 / 8.0);
  EXPECT_EQ(r.recall[1], 5.0 / 8.0);
  EXPECT_EQ(r.recall[2], 1.0);
}

TEST(Retrieval, RandomScoresMatchSortingOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> coarse(0, 3);  // plenty of ties
  auto s = nn::Tensor<double>::matrix(8, 8);
  for (auto& x : s.values()) x = coarse(rng);
  const auto r = rank_retrieval(s, kKs, "text_to_image");
  for (std::size_t k = 0; k < 3; ++k) {
    double hits = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      std::vector<std::size_t> order(8);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return s.at(i, a) > s.at(i, b); });
      const auto pos = std::find(order.begin(), order.end(), i) - order.begin();
      if (static_cast<std::size_t>(pos) < kKs[k]) hits += 1;
    }
    EXPECT_EQ(r.recall[k], hits / 8.0);
  }
}

TEST(Retrieval, RecallMonotoneAndCompleteAtN) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n;
  auto s = nn::Tensor<double>::matrix(8, 8);
  for (auto& x : s.values()) x = n(rng);
  const auto r = rank_retrieval(s, kKs, "text_to_image");
  EXPECT_LE(r.recall[0], r.recall[1]);
  EXPECT_LE(r.recall[1], r.recall[2]);
  EXPECT_EQ(r.recall[2], 1.0);
}

TEST(Retrieval, TooFewItemsForK) {
  const std::size_t ks[] = {10};
  EXPECT_THROW(rank_retrieval(identity(8), ks, "text_to_image"), std::invalid_argument);
}

TEST(Accuracy, SaturatedCorrectLogits) {
  auto l = nn::Tensor<double>::matrix(3, 4);
  const std::size_t labels[] = {2, 0, 3};
  for (std::size_t i = 0; i < 3; ++i) l.at(i, labels[i]) = 1e6;
  EXPECT_EQ(accuracy(l, labels), 1.0);
  const std::size_t permuted[] = {0, 3, 2};
  EXPECT_EQ(accuracy(l, permuted), 0.0);
}

TEST(Accuracy, TiesGoToSmallerId) {
  const auto l = nn::Tensor<double>::matrix(2, 4, 1.0);
  const std::size_t labels[] = {0, 1};
  EXPECT_EQ(accuracy(l, labels), 0.5);
}

TEST(JsDivergence, IdenticalIsZeroDisjointIsLn2) {
  const double p[] = {0.2, 0.8, 0.0}, q[] = {0.0, 0.0, 1.0};
  EXPECT_EQ(js_divergence(p, p), 0.0);
  EXPECT_NEAR(js_divergence(p, q), std::log(2.0), 1e-15);
  const double r[] = {0.5, 0.25, 0.25};
  EXPECT_EQ(js_divergence(p, r), js_divergence(r, p));
}

struct TinyModel {
  kg::KnowledgeGraph graph = kg::synth_graph(testing::tiny_graph_spec());
  std::vector<kg::ImageTextPair> pairs = kg::synth_pairs(8, 5, 8, 3);
  model::KnowledgeClip<float> model{testing::tiny_model(), vocab(), graph.relations().size(), 1};

  model::Vocabulary vocab() const {
    std::vector<std::string> caps;
    for (const auto& p : pairs) caps.push_back(p.caption);
    return model::build_vocabulary(graph, caps, 400);
  }
};

TEST(TemplateProbe, RowsSumToOneAndIdenticalTemplatesAgree) {
  TinyModel t;
  const std::vector<std::string> classes{"red", "blue", "green"};
  std::vector<const kg::Image*> images{&t.pairs[0].image, &t.pairs[1].image, &t.pairs[2].image};
  const std::vector<std::string> same{"a photo of a {}", "a photo of a {}"};
  const auto r = template_probe(t.model, classes, images, same);
  for (const auto& tmpl : r.probabilities)
    for (const auto& row : tmpl) EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-6);
  for (double js : r.class_js) EXPECT_EQ(js, 0.0);
}

TEST(TemplateProbe, SymmetricUnderTemplateSwapAndBounded) {
  TinyModel t;
  const std::vector<std::string> classes{"red", "blue"};
  std::vector<const kg::Image*> images{&t.pairs[0].image, &t.pairs[1].image};
  const std::vector<std::string> a{"a photo of a {}", "not a photo of a {}"};
  const std::vector<std::string> b{a[1], a[0]};
  const auto ra = template_probe(t.model, classes, images, a);
  const auto rb = template_probe(t.model, classes, images, b);
  EXPECT_EQ(ra.class_js, rb.class_js);
  for (double js : ra.class_js) {
    EXPECT_GE(js, 0.0);
    EXPECT_LE(js, std::log(2.0));
  }
}

TEST(TemplateProbe, NeedsTwoClasses) {
  TinyModel t;
  const std::vector<std::string> one{"red"};
  std::vector<const kg::Image*> images{&t.pairs[0].image};
  const std::vector<std::string> tmpl{"{}", "a {}"};
  EXPECT_THROW(template_probe(t.model, one, images, tmpl), std::invalid_argument);
}

TEST(RetrievalEval, DeterministicAndChunkIndependent) {
  TinyModel t;
  const std::size_t ks[] = {1, 5};
  const auto a = retrieval_eval(t.model, t.pairs, ks, 3);
  const auto b = retrieval_eval(t.model, t.pairs, ks, 64);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(a[d].recall, b[d].recall);
}

TEST(TripletEval, CoversEveryTripletOnce) {
  TinyModel t;
  std::vector<std::size_t> all(t.graph.triplets().size());
  std::iota(all.begin(), all.end(), 0);
  const auto r = triplet_eval(t.model, t.graph, all, 4, 1);
  EXPECT_EQ(r.triplets, all.size());
  for (double x : {r.relation_accuracy, r.e2e_r1, r.g2e_r1}) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  const auto again = triplet_eval(t.model, t.graph, all, 4, 1);
  EXPECT_EQ(again.e2e_r1, r.e2e_r1);
  EXPECT_EQ(again.relation_accuracy, r.relation_accuracy);
}

}  // namespace
}  // namespace kclip::eval
