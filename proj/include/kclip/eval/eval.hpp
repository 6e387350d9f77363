// SPDX-License-Identifier: Apache-2.0
//
// Retrieval, relation-classification, in-batch triplet retrieval and
// template-probe evaluation. Everything runs in evaluation mode and is
// deterministic. Ranking ties go to the smaller candidate index.

#ifndef KCLIP_EVAL_EVAL_HPP_
#define KCLIP_EVAL_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kclip/kg/jsonl.hpp"
#include "kclip/model/knowledge_clip.hpp"

namespace kclip::eval {

struct RetrievalReport {
  std::string direction;  // "text_to_image" or "image_to_text"
  std::size_t n = 0;
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // one per k
};

/// 0-based rank of the target column in a row of scores: the number of
/// columns scoring higher, plus equal-scoring columns with smaller index.
std::size_t rank_of(std::span<const double> scores, std::size_t target);

/// Query i's correct candidate is i. Throws std::invalid_argument when a
/// k is 0 or exceeds the candidate count.
RetrievalReport rank_retrieval(const nn::Tensor<double>& scores, std::span<const std::size_t> ks,
                               std::string direction);

/// Pooled encoder features, cosine similarity, both directions.
template <typename Real>
std::vector<RetrievalReport> retrieval_eval(const model::KnowledgeClip<Real>& model,
                                            std::span<const kg::ImageTextPair> pairs,
                                            std::span<const std::size_t> ks,
                                            std::size_t chunk = 64);

/// Fraction of rows whose argmax (ties to the smaller id) equals the label.
double accuracy(const nn::Tensor<double>& logits, std::span<const std::size_t> labels);

struct TripletReport {
  std::size_t triplets = 0;
  double relation_accuracy = 0;  // argmax MLP(R(h,-,t))
  double e2e_r1 = 0;             // Y(-,-,t_i) retrieves Y(h_i,r_i,-) in its batch
  double g2e_r1 = 0;             // Y(-,-,t) retrieves G(t) among the batch subgraph
};

/// Evaluates the given triplets in partitioned batches (distinct tails and
/// (head, relation) keys). Views are drawn from `seed`.
template <typename Real>
TripletReport triplet_eval(const model::KnowledgeClip<Real>& model,
                           const kg::KnowledgeGraph& graph, std::span<const std::size_t> triplets,
                           std::size_t batch_size, std::uint64_t seed);

struct ProbeReport {
  std::string divergence = "jensen-shannon";
  std::vector<std::string> classes;
  std::vector<std::string> templates;
  /// probabilities[t][i][c]: image of class i, template t, class c.
  std::vector<std::vector<std::vector<double>>> probabilities;
  std::vector<double> class_js;  // mean pairwise JS over templates, per class
  double mean_js = 0;
};

/// Jensen-Shannon divergence in nats; within [0, ln 2].
double js_divergence(std::span<const double> p, std::span<const double> q);

/// One image per class; "{}" in each template is replaced by the class name.
/// Throws std::invalid_argument for fewer than two classes or templates.
template <typename Real>
ProbeReport template_probe(const model::KnowledgeClip<Real>& model,
                           std::span<const std::string> classes,
                           std::span<const kg::Image* const> class_images,
                           std::span<const std::string> templates);

nlohmann::json to_json(const RetrievalReport& r);
nlohmann::json to_json(const TripletReport& r);
nlohmann::json to_json(const ProbeReport& r);

}  // namespace kclip::eval

#endif  // KCLIP_EVAL_EVAL_HPP_
