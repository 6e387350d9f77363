// SPDX-License-Identifier: Apache-2.0

#include "kclip/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kclip/kg/sampler.hpp"

namespace kclip::eval {

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  const double s = scores[target];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > s || (scores[j] == s && j < target)) ++rank;
  }
  return rank;
}

RetrievalReport rank_retrieval(const nn::Tensor<double>& scores, std::span<const std::size_t> ks,
                               std::string direction) {
  const std::size_t n = scores.rows(), m = scores.cols();
  for (std::size_t k : ks) {
    if (k == 0 || k > m) {
      throw std::invalid_argument("recall@" + std::to_string(k) + " needs at least " +
                                  std::to_string(k) + " candidates, have " + std::to_string(m));
    }
  }
  if (n > m) throw std::invalid_argument("more queries than candidates");
  RetrievalReport r{std::move(direction), n, {ks.begin(), ks.end()}, std::vector<double>(ks.size())};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rank = rank_of({scores.row(i), m}, i);
    for (std::size_t k = 0; k < ks.size(); ++k)
      if (rank < ks[k]) r.recall[k] += 1.0;
  }
  for (auto& x : r.recall) x /= static_cast<double>(n);
  return r;
}

namespace {

template <typename Real>
nn::Tensor<double> cosine_matrix(const nn::Tensor<Real>& a, const nn::Tensor<Real>& b) {
  nn::Tape<double> t(false);
  return t.value(t.cosine_similarity(t.constant(a.template cast<double>()),
                                     t.constant(b.template cast<double>())));
}

template <typename Real>
nn::Tensor<Real> stack(const std::vector<nn::Tensor<Real>>& parts) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  auto out = nn::Tensor<Real>::matrix(rows, parts.front().cols());
  Real* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.values().begin(), p.values().end(), dst);
  return out;
}

}  // namespace

template <typename Real>
std::vector<RetrievalReport> retrieval_eval(const model::KnowledgeClip<Real>& model,
                                            std::span<const kg::ImageTextPair> pairs,
                                            std::span<const std::size_t> ks, std::size_t chunk) {
  const std::size_t n = pairs.size();
  if (n == 0) throw std::invalid_argument("retrieval_eval: no pairs");
  std::vector<nn::Tensor<Real>> images, texts;
  const auto ctx = model::ForwardContext::eval();
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    std::vector<const kg::Image*> ims;
    std::vector<std::string> caps;
    for (std::size_t i = begin; i < end; ++i) {
      ims.push_back(&pairs[i].image);
      caps.push_back(pairs[i].caption);
    }
    nn::Tape<Real> tape(false);
    images.push_back(tape.value(model.pooled_images(tape, ims, ctx)));
    texts.push_back(tape.value(model.pooled_texts(tape, caps, ctx)));
  }
  const auto image = stack(images), text = stack(texts);
  return {rank_retrieval(cosine_matrix(text, image), ks, "text_to_image"),
          rank_retrieval(cosine_matrix(image, text), ks, "image_to_text")};
}

double accuracy(const nn::Tensor<double>& logits, std::span<const std::size_t> labels) {
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double* row = logits.row(i);
    const std::size_t best =
        static_cast<std::size_t>(std::max_element(row, row + logits.cols()) - row);
    if (best == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

template <typename Real>
TripletReport triplet_eval(const model::KnowledgeClip<Real>& model,
                           const kg::KnowledgeGraph& graph, std::span<const std::size_t> triplets,
                           std::size_t batch_size, std::uint64_t seed) {
  TripletReport r;
  const auto batches = kg::partition_batches(graph, triplets, batch_size, seed);
  std::size_t e2e_hits = 0, g2e_hits = 0, g2e_total = 0, rel_hits = 0;
  for (const auto& batch : batches) {
    nn::Tape<Real> tape(false);
    const auto fw = model.forward(tape, graph, batch.items, model::ForwardContext::eval());
    const std::size_t b = batch.items.size();
    const auto e2e = cosine_matrix(tape.value(fw.tails), tape.value(fw.heads_relations));
    for (std::size_t i = 0; i < b; ++i)
      if (rank_of({e2e.row(i), b}, i) == 0) ++e2e_hits;
    const auto g = tape.value(model.propagate(tape, fw));
    const auto g2e = cosine_matrix(tape.value(fw.nodes), g);
    const std::size_t nodes = g2e.rows();
    for (std::size_t i = 0; i < nodes; ++i)
      if (rank_of({g2e.row(i), nodes}, i) == 0) ++g2e_hits;
    g2e_total += nodes;
    std::vector<std::size_t> labels;
    for (const auto& s : batch.items) labels.push_back(s.relation);
    const auto logits = tape.value(fw.relation_logits).template cast<double>();
    rel_hits += static_cast<std::size_t>(std::lround(accuracy(logits, labels) * b));
    r.triplets += b;
  }
  if (r.triplets > 0) {
    r.relation_accuracy = static_cast<double>(rel_hits) / static_cast<double>(r.triplets);
    r.e2e_r1 = static_cast<double>(e2e_hits) / static_cast<double>(r.triplets);
    r.g2e_r1 = static_cast<double>(g2e_hits) / static_cast<double>(g2e_total);
  }
  return r;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  double js = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) js += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0) js += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::clamp(js, 0.0, std::log(2.0));
}

template <typename Real>
ProbeReport template_probe(const model::KnowledgeClip<Real>& model,
                           std::span<const std::string> classes,
                           std::span<const kg::Image* const> class_images,
                           std::span<const std::string> templates) {
  if (classes.size() < 2) throw std::invalid_argument("template_probe: need at least two classes");
  if (templates.size() < 2) {
    throw std::invalid_argument("template_probe: need at least two templates");
  }
  if (class_images.size() != classes.size()) {
    throw std::invalid_argument("template_probe: one image per class is required");
  }
  ProbeReport r;
  r.classes.assign(classes.begin(), classes.end());
  r.templates.assign(templates.begin(), templates.end());
  const auto ctx = model::ForwardContext::eval();
  nn::Tape<Real> tape(false);
  const auto images = tape.value(model.pooled_images(tape, class_images, ctx));
  const double tau = static_cast<double>(model.tau());
  for (const auto& tmpl : templates) {
    std::vector<std::string> prompts;
    for (const auto& c : classes) {
      std::string p = tmpl;
      if (auto pos = p.find("{}"); pos != std::string::npos) p.replace(pos, 2, c);
      prompts.push_back(std::move(p));
    }
    const auto texts = tape.value(model.pooled_texts(tape, prompts, ctx));
    nn::Tape<double> t(false);
    nn::Var logits = t.scale(t.cosine_similarity(t.constant(images.template cast<double>()),
                                             t.constant(texts.template cast<double>())),
                         1.0 / tau);
    const auto probs = t.value(t.softmax(logits));
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < probs.rows(); ++i)
      rows.emplace_back(probs.row(i), probs.row(i) + probs.cols());
    r.probabilities.push_back(std::move(rows));
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    double sum = 0;
    std::size_t count = 0;
    for (std::size_t a = 0; a < templates.size(); ++a)
      for (std::size_t b = a + 1; b < templates.size(); ++b, ++count)
        sum += js_divergence(r.probabilities[a][c], r.probabilities[b][c]);
    r.class_js.push_back(sum / static_cast<double>(count));
  }
  double total = 0;
  for (double js : r.class_js) total += js;
  r.mean_js = total / static_cast<double>(r.class_js.size());
  return r;
}

nlohmann::json to_json(const RetrievalReport& r) {
  nlohmann::json recall;
  for (std::size_t i = 0; i < r.ks.size(); ++i) recall["R@" + std::to_string(r.ks[i])] = r.recall[i];
  return {{"direction", r.direction}, {"n", r.n}, {"recall", recall}, {"tie_break", "smaller index"}};
}

nlohmann::json to_json(const TripletReport& r) {
  return {{"triplets", r.triplets},
          {"relation_accuracy", r.relation_accuracy},
          {"e2e_r1", r.e2e_r1},
          {"g2e_r1", r.g2e_r1}};
}

nlohmann::json to_json(const ProbeReport& r) {
  return {{"divergence", r.divergence}, {"classes", r.classes},     {"templates", r.templates},
          {"probabilities", r.probabilities}, {"class_js", r.class_js}, {"mean_js", r.mean_js}};
}

#define KCLIP_INSTANTIATE(Real)                                                                 \
  template std::vector<RetrievalReport> retrieval_eval<Real>(                                   \
      const model::KnowledgeClip<Real>&, std::span<const kg::ImageTextPair>,                    \
      std::span<const std::size_t>, std::size_t);                                               \
  template TripletReport triplet_eval<Real>(const model::KnowledgeClip<Real>&,                  \
                                            const kg::KnowledgeGraph&,                          \
                                            std::span<const std::size_t>, std::size_t,          \
                                            std::uint64_t);                                     \
  template ProbeReport template_probe<Real>(const model::KnowledgeClip<Real>&,                  \
                                            std::span<const std::string>,                       \
                                            std::span<const kg::Image* const>,                  \
                                            std::span<const std::string>);

KCLIP_INSTANTIATE(float)
KCLIP_INSTANTIATE(double)

#undef KCLIP_INSTANTIATE

}  // namespace kclip::eval
