// SPDX-License-Identifier: Apache-2.0

#include "kclip/train/grad_suite.hpp"

#include <cmath>

#include "kclip/kg/sampler.hpp"
#include "kclip/objectives/losses.hpp"

namespace kclip::train {

using nn::Tape;
using nn::Tensor;
using nn::Var;

nn::Tensor<double> random_tensor(nn::Shape shape, std::mt19937_64& rng, double scale) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& x : t.values()) x = dist(rng);
  return t;
}

namespace {

Var weighted_sum(Tape<double>& tape, Var out, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Var w = tape.constant(random_tensor(tape.shape(out), rng));
  return tape.sum(tape.mul(out, w));
}

}  // namespace

std::vector<GradCase> op_grad_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCase> cases;
  auto add = [&](std::string name, nn::TensorFunction fn, std::vector<nn::Shape> shapes) {
    GradCase c{std::move(name), std::move(fn), {}};
    for (auto& s : shapes) c.inputs.push_back(random_tensor(s, rng));
    cases.push_back(std::move(c));
  };
  add("matmul", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.matmul(in[0], in[1]), seed);
  }, {{3, 4}, {4, 5}});
  add("matmul_nt", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.matmul(in[0], in[1], false, true), seed);
  }, {{3, 4}, {5, 4}});
  add("matmul_tn", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.matmul(in[0], in[1], true, false), seed);
  }, {{4, 3}, {4, 5}});
  add("matmul_tt", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.matmul(in[0], in[1], true, true), seed);
  }, {{4, 3}, {5, 4}});
  add("transpose", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.transpose(in[0]), seed);
  }, {{3, 5}});
  add("add_broadcast", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.add(in[0], in[1]), seed);
  }, {{6, 4}, {2, 4}});
  add("sub", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.sub(in[0], in[1]), seed);
  }, {{3, 4}, {3, 4}});
  add("mul", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.mul(in[0], in[1]), seed);
  }, {{3, 4}, {3, 4}});
  add("scale", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.scale(in[0], -1.7), seed);
  }, {{3, 4}});
  add("scale_by", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.scale_by(in[0], in[1]), seed);
  }, {{3, 4}, {1}});
  add("exp", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.exp(in[0]), seed);
  }, {{3, 4}});
  add("gelu", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.gelu(in[0]), seed);
  }, {{4, 5}});
  add("scale_rows", [seed](Tape<double>& t, std::span<const Var> in) {
    const std::vector<double> f{0.0, 1.25, -0.5};
    return weighted_sum(t, t.scale_rows(in[0], f, 2), seed);
  }, {{6, 3}});
  add("concat_rows", [seed](Tape<double>& t, std::span<const Var> in) {
    const std::vector<Var> parts{in[0], in[1], in[0]};
    return weighted_sum(t, t.concat_rows(parts), seed);
  }, {{2, 3}, {1, 3}});
  add("slice_rows", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.slice_rows(in[0], 1, 3), seed);
  }, {{5, 3}});
  add("embedding", [seed](Tape<double>& t, std::span<const Var> in) {
    const std::vector<std::size_t> ids{3, 0, 3, 2};
    return weighted_sum(t, t.embedding(in[0], ids), seed);
  }, {{5, 4}});
  add("layer_norm", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.layer_norm(in[0], in[1], in[2]), seed);
  }, {{3, 6}, {6}, {6}});
  add("softmax", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.softmax(in[0]), seed);
  }, {{3, 5}});
  add("masked_softmax", [seed](Tape<double>& t, std::span<const Var> in) {
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1};
    return weighted_sum(t, t.masked_softmax(in[0], mask), seed);
  }, {{3, 4}});
  add("l2_normalize", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.l2_normalize(in[0]), seed);
  }, {{3, 5}});
  add("cosine_similarity", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.cosine_similarity(in[0], in[1]), seed);
  }, {{3, 5}, {4, 5}});
  add("attention", [seed](Tape<double>& t, std::span<const Var> in) {
    return weighted_sum(t, t.attention(in[0], in[1], in[2], 3, 2), seed);
  }, {{6, 4}, {6, 4}, {6, 4}});
  add("attention_masked", [seed](Tape<double>& t, std::span<const Var> in) {
    const std::vector<std::uint8_t> mask{1, 1, 0, 1, 0, 0};
    return weighted_sum(t, t.attention(in[0], in[1], in[2], 3, 2, mask), seed);
  }, {{6, 4}, {6, 4}, {6, 4}});
  add("sum", [](Tape<double>& t, std::span<const Var> in) { return t.sum(in[0]); }, {{3, 4}});
  add("mean", [](Tape<double>& t, std::span<const Var> in) { return t.mean(in[0]); }, {{3, 4}});
  add("mean_rows", [seed](Tape<double>& t, std::span<const Var> in) {
    const std::vector<std::uint8_t> mask{1, 1, 0, 0, 1, 1};
    return weighted_sum(t, t.mean_rows(in[0], 3, mask), seed);
  }, {{6, 4}});
  add("cross_entropy", [](Tape<double>& t, std::span<const Var> in) {
    const std::vector<std::size_t> targets{2, 0, 3};
    return t.cross_entropy(in[0], targets);
  }, {{3, 4}});
  add("kl_divergence", [](Tape<double>& t, std::span<const Var> in) {
    return t.kl_divergence(in[0], in[1]);
  }, {{3, 4}, {3, 4}});
  return cases;
}


std::vector<GradCase> loss_grad_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = 2 + seed % 4, d = 3 + seed % 5;
  const Tensor<double> log_tau = Tensor<double>::scalar(std::log(0.5));
  std::vector<GradCase> cases;
  cases.push_back({"clip_loss", [](Tape<double>& t, std::span<const Var> in) {
    return objectives::clip_loss(t, in[0], in[1], in[2]);
  }, {random_tensor({n, d}, rng), random_tensor({n, d}, rng), log_tau}});
  cases.push_back({"e2e_loss", [](Tape<double>& t, std::span<const Var> in) {
    return objectives::e2e_loss(t, in[0], in[1], in[2]);
  }, {random_tensor({n, d}, rng), random_tensor({n, d}, rng), log_tau}});
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(rng() % 4);
  cases.push_back({"e2r_loss", [labels](Tape<double>& t, std::span<const Var> in) {
    return objectives::e2r_loss(t, in[0], labels);
  }, {random_tensor({n, 4}, rng)}});
  objectives::Subgraph g{n, {}, {}};
  for (std::size_t e = 0; e < n; ++e) {
    g.heads.push_back(rng() % n);
    g.tails.push_back(rng() % n);
  }
  cases.push_back({"g2e_loss", [g](Tape<double>& t, std::span<const Var> in) {
    const Var ws[] = {in[2], in[3]};
    return objectives::g2e_loss(t, in[0], objectives::gnn_propagate(t, g, in[0], in[1], ws), in[4]);
  }, {random_tensor({n, d}, rng), random_tensor({n, d}, rng), random_tensor({d, 1}, rng),
      random_tensor({d, 1}, rng), log_tau}});
  const Tensor<double> teacher = random_tensor({n, n}, rng);
  cases.push_back({"kd_loss", [teacher](Tape<double>& t, std::span<const Var> in) {
    return objectives::kd_loss(t, in[0], in[1], teacher, 0.6);
  }, {random_tensor({n, n}, rng), log_tau}});
  return cases;
}

model::ModelConfig toy_model_config() {
  model::ModelConfig m;
  m.encoder.layers = 1;
  m.encoder.width = 8;
  m.encoder.heads = 2;
  m.encoder.mlp_ratio = 2;
  m.encoder.output_dim = 8;
  m.encoder.image_size = 8;
  m.encoder.patch_size = 4;
  m.encoder.text_length = 6;
  m.encoder.vocab_size = 400;
  m.encoder.drop_path = 0.0;
  m.fusion.layers = 1;
  m.fusion.width = 8;
  m.fusion.heads = 2;
  m.fusion.mlp_ratio = 1;
  m.fusion.drop_path = 0.0;
  m.gnn_layers = 2;
  m.tau_init = 0.5;
  return m;
}

kg::SynthSpec toy_graph_spec(std::uint64_t seed) {
  kg::SynthSpec s;
  s.entities = 6;
  s.relations = 3;
  s.triplets = 10;
  s.seed = seed;
  s.image_size = 8;
  return s;
}

namespace {

void record(GradSuiteReport& out, std::string name, std::uint64_t seed,
            const nn::GradCheckReport& r) {
  if (r.max_rel_err > out.max_rel_err || out.entries.empty()) {
    out.max_rel_err = std::max(out.max_rel_err, r.max_rel_err);
    out.worst = name + " seed " + std::to_string(seed) + " " + r.worst;
  }
  out.entries.push_back({std::move(name), seed, r});
}

void model_checks(GradSuiteReport& out, std::uint64_t seed, std::size_t coords) {
  const auto graph = kg::synth_graph(toy_graph_spec(seed));
  const auto pairs = kg::synth_pairs(3, seed, 8, 3);
  std::vector<std::string> captions;
  for (const auto& p : pairs) captions.push_back(p.caption);
  const auto cfg = toy_model_config();
  const auto vocab = model::build_vocabulary(graph, captions, cfg.encoder.vocab_size);
  model::KnowledgeClip<double> m(cfg, vocab, graph.relations().size(), seed);
  model::KnowledgeClip<double> teacher(cfg, vocab, graph.relations().size(), seed + 1000);
  const auto batch = kg::sample_batch(graph, 3, seed);
  const auto ctx = model::ForwardContext::eval();

  std::vector<const kg::Image*> images;
  for (const auto& p : pairs) images.push_back(&p.image);
  Tensor<double> teacher_sims;
  {
    Tape<double> t(false);
    teacher_sims = t.value(t.cosine_similarity(teacher.pooled_images(t, images, ctx),
                                               teacher.pooled_texts(t, captions, ctx)));
  }
  std::vector<std::size_t> labels;
  for (const auto& s : batch.items) labels.push_back(s.relation);

  const std::pair<const char*, nn::LossFunction> losses[] = {
      {"model_e2e", [&](Tape<double>& t) {
         auto fw = m.forward(t, graph, batch.items, ctx);
         return objectives::e2e_loss(t, fw.tails, fw.heads_relations, m.log_tau(t));
       }},
      {"model_e2r", [&](Tape<double>& t) {
         auto fw = m.forward(t, graph, batch.items, ctx);
         return objectives::e2r_loss(t, fw.relation_logits, labels);
       }},
      {"model_g2e", [&](Tape<double>& t) {
         auto fw = m.forward(t, graph, batch.items, ctx);
         return objectives::g2e_loss(t, fw.nodes, m.propagate(t, fw), m.log_tau(t));
       }},
      {"model_clip", [&](Tape<double>& t) {
         return objectives::clip_loss(t, m.pooled_images(t, images, ctx),
                                      m.pooled_texts(t, captions, ctx), m.log_tau(t));
       }},
      {"model_kd", [&](Tape<double>& t) {
         Var s = t.cosine_similarity(m.pooled_images(t, images, ctx), m.pooled_texts(t, captions, ctx));
         return objectives::kd_loss(t, s, m.log_tau(t), teacher_sims, teacher.tau());
       }},
  };
  // Layer norm over near-zero padded rows has large third derivatives, so
  // the central difference needs a smaller step here than for single ops.
  for (const auto& [name, f] : losses) {
    record(out, name, seed, nn::grad_check_parameters(f, m.parameters(), 1e-5, coords, seed));
  }
}

}  // namespace

GradSuiteReport run_grad_suite(std::uint64_t first_seed, std::size_t seeds, bool model_losses,
                               std::size_t coords_per_parameter) {
  GradSuiteReport out;
  for (std::uint64_t seed = first_seed; seed < first_seed + seeds; ++seed) {
    for (auto& c : op_grad_cases(seed)) record(out, c.name, seed, nn::grad_check(c.fn, c.inputs));
    for (auto& c : loss_grad_cases(seed)) record(out, c.name, seed, nn::grad_check(c.fn, c.inputs));
    if (model_losses) model_checks(out, seed, coords_per_parameter);
  }
  return out;
}

}  // namespace kclip::train
