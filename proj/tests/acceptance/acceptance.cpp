// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 1 2 5`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "kclip/eval/eval.hpp"
#include "kclip/kg/sampler.hpp"
#include "kclip/kg/synth.hpp"
#include "kclip/objectives/losses.hpp"
#include "kclip/train/checkpoint.hpp"
#include "kclip/train/grad_suite.hpp"
#include "kclip/train/trainer.hpp"

namespace {

using namespace kclip;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using testing::Matrix;
using testing::random_matrix;
using testing::to_tensor;

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60;
constexpr double kExact = 1e-6;
constexpr double kOverfitRelation = 0.99;
constexpr double kOverfitE2e = 0.95;
constexpr std::size_t kOverfitSteps = 2000;
constexpr double kOverfitSeconds = 600;
constexpr int kSeeds = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Var log_tau(Tape<double>& t, double tau) {
  return t.constant(Tensor<double>::scalar(std::log(tau)));
}

double scalar(Tape<double>& t, Var v) { return t.value(v).item(); }

// -- 1 ------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto rep = train::run_grad_suite(0, 20);
  const double secs = seconds_since(t0);
  std::set<std::string> names;
  for (const auto& e : rep.entries) names.insert(e.name);
  return {rep.max_rel_err < kGradTol && secs < kGradSeconds,
          std::to_string(rep.entries.size()) + " checks (" + std::to_string(names.size()) +
              " ops and losses x 20 seeds), max rel err " + fmt("%.3g", rep.max_rel_err) +
              " < 1e-4 at " + rep.worst + ", " + fmt("%.1f", secs) + " s < 60 s"};
}

// -- 2 ------------------------------------------------------------------------

Outcome loss_identities() {
  std::mt19937_64 rng(2);
  std::vector<std::pair<std::string, double>> errs;
  {
    Tape<double> t;
    Var a = t.constant(to_tensor(random_matrix(1, 6, rng)));
    Var b = t.constant(to_tensor(random_matrix(1, 6, rng)));
    errs.push_back({"N=1 e2e", std::abs(scalar(t, objectives::e2e_loss(t, a, b, log_tau(t, 0.07))))});
    errs.push_back({"N=1 clip", std::abs(scalar(t, objectives::clip_loss(t, a, b, log_tau(t, 0.07))))});
  }
  for (std::size_t n : {2, 5, 9}) {
    Tape<double> t;
    Var same = t.constant(to_tensor(Matrix(n, std::vector<double>(4, 0.3))));
    const double want = std::log(static_cast<double>(n));
    errs.push_back({"uniform clip N=" + std::to_string(n),
                    std::abs(scalar(t, objectives::clip_loss(t, same, same, log_tau(t, 0.07))) - want)});
    errs.push_back({"uniform e2e N=" + std::to_string(n),
                    std::abs(scalar(t, objectives::e2e_loss(t, same, same, log_tau(t, 0.07))) - want)});
  }
  {
    Tape<double> t;
    Var logits = t.constant(Tensor<double>::matrix(4, 13));
    const std::vector<std::size_t> labels{0, 5, 12, 7};
    errs.push_back({"uniform e2r |R|=13",
                    std::abs(scalar(t, objectives::e2r_loss(t, logits, labels)) - 2.564949)});
  }
  {
    const Matrix s = random_matrix(5, 5, rng);
    Tape<double> t;
    errs.push_back({"KD student=teacher",
                    std::abs(scalar(t, objectives::kd_loss(t, t.constant(to_tensor(s)), log_tau(t, 0.07),
                                                           to_tensor(s), 0.07)))});
  }
  {
    Tape<double> t;
    Var y = t.constant(to_tensor(random_matrix(1, 6, rng)));
    Var g = t.constant(to_tensor(random_matrix(1, 6, rng)));
    errs.push_back({"single-entity g2e", std::abs(scalar(t, objectives::g2e_loss(t, y, g, log_tau(t, 0.07))))});
  }
  auto worst = std::max_element(errs.begin(), errs.end(),
                                [](const auto& a, const auto& b) { return a.second < b.second; });
  // The e2r constant is quoted to 6 decimals; ln 13 = 2.5649493575.
  return {worst->second < kExact, std::to_string(errs.size()) + " identities, max |err| " +
                                      fmt("%.3g", worst->second) + " (" + worst->first + ") < 1e-6"};
}

// -- 3 ------------------------------------------------------------------------

Outcome loop_oracles() {
  double worst = 0;
  std::string where;
  auto note = [&](double err, const std::string& what) {
    if (err > worst) {
      worst = err;
      where = what;
    }
  };
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    const std::size_t n = 1 + rng() % 5, d = 2 + rng() % 7;
    const double tau = 0.05 + 0.95 * std::uniform_real_distribution<double>(0, 1)(rng);
    const Matrix a = random_matrix(n, d, rng), b = random_matrix(n, d, rng);
    const std::string tag = " trial " + std::to_string(trial);
    Tape<double> t;
    Var av = t.constant(to_tensor(a)), bv = t.constant(to_tensor(b));
    note(std::abs(scalar(t, objectives::clip_loss(t, av, bv, log_tau(t, tau))) -
                  testing::oracle_clip(a, b, tau)), "clip" + tag);
    note(std::abs(scalar(t, objectives::e2e_loss(t, av, bv, log_tau(t, tau))) -
                  testing::oracle_e2e(a, b, tau)), "e2e" + tag);
    note(std::abs(scalar(t, objectives::g2e_loss(t, av, bv, log_tau(t, tau))) -
                  testing::oracle_g2e(a, b, tau)), "g2e" + tag);
    const std::size_t rels = 2 + rng() % 12;
    const Matrix logits = random_matrix(n, rels, rng);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(rng() % rels);
    note(std::abs(scalar(t, objectives::e2r_loss(t, t.constant(to_tensor(logits)), labels)) -
                  testing::oracle_e2r(logits, labels)), "e2r" + tag);
    const Matrix s = random_matrix(n, n, rng), te = random_matrix(n, n, rng);
    const double tau_t = 0.05 + 0.95 * std::uniform_real_distribution<double>(0, 1)(rng);
    note(std::abs(scalar(t, objectives::kd_loss(t, t.constant(to_tensor(s)), log_tau(t, tau),
                                                to_tensor(te), tau_t)) -
                  testing::oracle_kd(s, tau, te, tau_t)), "kd" + tag);
  }
  return {worst < kExact, "250 comparisons (clip, e2e, e2r, g2e, kd x 50 batches, N<=5), max |diff| " +
                              fmt("%.3g", worst) + (where.empty() ? "" : " (" + where + ")") + " < 1e-6"};
}

// -- 4 ------------------------------------------------------------------------

Outcome gnn_oracle() {
  double worst = 0;
  bool isolated_exact = true;
  std::size_t isolated = 0;
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    std::mt19937_64 rng(5000 + trial);
    const std::size_t n = 1 + rng() % 6, edges = rng() % 10, layers = 1 + rng() % 3, d = 1 + rng() % 6;
    objectives::Subgraph g{n, {}, {}};
    for (std::size_t e = 0; e < edges; ++e) {
      g.heads.push_back(rng() % n);
      g.tails.push_back(rng() % n);
    }
    const Matrix y0 = random_matrix(n, d, rng);
    const Matrix r = random_matrix(std::max<std::size_t>(edges, 1), d, rng);
    const Matrix w = random_matrix(layers, d, rng);
    Tape<double> t;
    std::vector<Var> ws;
    for (const auto& row : w) ws.push_back(t.constant(Tensor<double>({d, 1}, row)));
    Var rv = t.constant(to_tensor(Matrix(r.begin(), r.begin() + static_cast<long>(std::max<std::size_t>(edges, 1)))));
    const auto out = t.value(objectives::gnn_propagate(t, g, t.constant(to_tensor(y0)), rv, ws));
    const auto want = testing::oracle_gnn(y0, r, g.heads, g.tails, w);
    for (std::size_t i = 0; i < n; ++i) {
      const bool has_in = std::find(g.tails.begin(), g.tails.end(), i) != g.tails.end();
      for (std::size_t k = 0; k < d; ++k) {
        worst = std::max(worst, std::abs(out.at(i, k) - want[i][k]));
        if (!has_in && out.at(i, k) != y0[i][k]) isolated_exact = false;
      }
      isolated += has_in ? 0 : 1;
    }
  }
  return {worst < kExact && isolated_exact,
          "200 random graphs (<=6 nodes, L_g<=3), max |diff| " + fmt("%.3g", worst) +
              " < 1e-6; " + std::to_string(isolated) + " isolated nodes " +
              (isolated_exact ? "bit-exact" : "NOT exact")};
}

// -- 5 ------------------------------------------------------------------------

Tensor<float> noise(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Tensor<float> t = Tensor<float>::matrix(rows, cols);
  std::normal_distribution<float> n(0.f, 1.f);
  for (auto& x : t.values()) x = n(rng);
  return t;
}

Outcome masked_substitution() {
  model::FusionConfig cfg;  // desk layout: 34 positions, d_m 128
  nn::ParameterStore<float> store;
  std::mt19937_64 init(3);
  model::FusionEncoder<float> fusion(store, cfg, init);
  const std::size_t S = cfg.entity_slots, d = cfg.input_dim;
  std::size_t identical = 0, trials = 1000, masked_elements = 0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(9000 + trial);
    const std::size_t batch = 1 + rng() % 3;
    model::ElementMask mask{};
    do {
      mask = {rng() % 2 == 0, rng() % 2 == 0, rng() % 2 == 0};
    } while (mask.head && mask.relation && mask.tail);
    masked_elements += mask.head + mask.relation + mask.tail;
    const auto h = noise(batch * S, d, rng), r = noise(batch, d, rng), tl = noise(batch * S, d, rng);
    // Substitute fresh content only in the masked elements.
    const auto h2 = mask.head ? noise(batch * S, d, rng) : h;
    const auto r2 = mask.relation ? noise(batch, d, rng) : r;
    const auto t2 = mask.tail ? noise(batch * S, d, rng) : tl;
    const bool training = trial % 2 == 1;
    auto run = [&](const Tensor<float>& hv, const Tensor<float>& rv, const Tensor<float>& tv) {
      Tape<float> tape(false);
      std::mt19937_64 drop(trial);
      model::ForwardContext ctx{training, &drop};
      auto in = fusion.assemble_masked(tape, {tape.constant(hv), S}, tape.constant(rv),
                                       {tape.constant(tv), S}, mask, batch);
      auto out = fusion.fuse(tape, in, ctx);
      return std::make_pair(tape.value(out.y), tape.value(out.relation));
    };
    if (run(h, r, tl) == run(h2, r2, t2)) ++identical;
  }
  return {identical == trials, std::to_string(identical) + "/" + std::to_string(trials) +
                                   " trials bit-identical (" + std::to_string(masked_elements) +
                                   " masked elements substituted, half with drop path active)"};
}

// -- 6 ------------------------------------------------------------------------

// Desk config with the encoder rate raised, since encoders start from random
// initialization here rather than from pretrained weights, and drop path
// off: memorization is the point of this run.
train::RunConfig overfit_config() {
  train::RunConfig c;
  c.train.steps = kOverfitSteps;
  c.train.lr_encoder = 1e-4;
  c.model.encoder.drop_path = 0.0;
  c.model.fusion.drop_path = 0.0;
  c.train.objectives.kd = false;
  return c;
}

std::vector<std::size_t> all_triplets(const kg::KnowledgeGraph& g) {
  std::vector<std::size_t> all(g.triplets().size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

Outcome overfit(std::string& property) {
  const auto graph = kg::synth_graph(kg::SynthSpec{32, 4, 128, {}, 7});
  const auto cfg = overfit_config();
  train::Trainer<float> trainer(cfg, graph, {},
                                model::build_vocabulary(graph, {}, cfg.model.encoder.vocab_size));
  const auto all = all_triplets(graph);
  std::vector<double> e2r_early, e2r_late;
  std::optional<std::size_t> reached;
  eval::TripletReport last, at;
  double train_secs = 0;
  const auto t0 = Clock::now();
  while (!trainer.finished()) {
    const auto r = trainer.step();
    if (r.step < 100) e2r_early.push_back(r.report.e2r);
    if (r.step >= 900 && r.step < 1000) e2r_late.push_back(r.report.e2r);
    const std::size_t done = trainer.steps_done();
    if (done % 100 == 0) {
      last = eval::triplet_eval(trainer.model(), graph, all, cfg.train.batch_size, 0);
      if (!reached && last.relation_accuracy >= kOverfitRelation && last.e2e_r1 >= kOverfitE2e) {
        reached = done;
        at = last;
        train_secs = seconds_since(t0);
      }
      if (reached && done >= 1000) break;
    }
  }
  if (!reached) {
    train_secs = seconds_since(t0);
    at = last;
  }
  property = "median e2r over steps [0,100) " + fmt("%.4f", median(e2r_early)) +
             (median(e2r_early) > median(e2r_late) ? " > " : " <= ") + "[900,1000) " +
             fmt("%.4f", median(e2r_late));
  if (median(e2r_early) <= median(e2r_late) || e2r_late.empty()) property = "FAIL " + property;
  else property = "PASS " + property;
  const bool ok = reached.has_value() && train_secs < kOverfitSeconds;
  return {ok, (reached ? "thresholds met at step " + std::to_string(*reached)
                       : std::string("thresholds not met within 2000 steps")) +
                  ": relation acc " + fmt("%.4f", at.relation_accuracy) + " (>= 0.99), E2E R@1 " +
                  fmt("%.4f", at.e2e_r1) + " (>= 0.95), G2E R@1 " + fmt("%.4f", at.g2e_r1) +
                  "; " + fmt("%.0f", train_secs) + " s (< 600 s); at step " +
                  std::to_string(trainer.steps_done()) + " E2E R@1 " + fmt("%.4f", last.e2e_r1)};
}

// -- shared small setup for 7 and 8 ------------------------------------------

model::ModelConfig small_model() {
  model::ModelConfig m;
  m.encoder.layers = 1;
  m.encoder.width = 32;
  m.encoder.heads = 2;
  m.encoder.mlp_ratio = 2;
  m.encoder.output_dim = 32;
  m.encoder.image_size = 16;
  m.encoder.patch_size = 4;
  m.encoder.text_length = 12;
  m.encoder.vocab_size = 512;
  m.fusion.layers = 1;
  m.fusion.width = 32;
  m.fusion.heads = 2;
  m.fusion.mlp_ratio = 2;
  m.encoder.drop_path = 0.0;
  m.fusion.drop_path = 0.0;
  return m;
}

kg::SynthSpec small_graph(std::uint64_t seed) { return {16, 4, 48, {}, seed, 16, 3}; }

double pair_r1(const model::KnowledgeClip<float>& m, const std::vector<kg::ImageTextPair>& pairs) {
  const std::size_t k1[] = {1};
  const auto reps = eval::retrieval_eval(m, pairs, k1);
  return 0.5 * (reps[0].recall[0] + reps[1].recall[0]);
}

// -- 7 ------------------------------------------------------------------------

Outcome continual_learning() {
  std::vector<double> drop_kd, drop_plain;
  std::string per_seed;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto graph = kg::synth_graph(small_graph(100 + seed));
    const auto pairs = kg::synth_pairs(64, 200 + seed, 16, 3);
    std::vector<std::string> captions;
    for (const auto& p : pairs) captions.push_back(p.caption);
    const auto vocab = model::build_vocabulary(graph, captions, small_model().encoder.vocab_size);

    train::RunConfig warm;
    warm.model = small_model();
    warm.train.steps = 400;
    warm.train.warmup = 40;
    warm.train.lr_encoder = 1e-3;
    warm.train.lr_fusion = 1e-3;
    warm.train.pair_batch_size = 32;
    warm.train.batch_size = 8;
    warm.train.interleave = 1.0;
    warm.train.seed = seed;
    warm.train.objectives = {false, false, false, false, true, false};
    train::Trainer<float> start(warm, graph, pairs, vocab);
    while (!start.finished()) start.step();
    const double before = pair_r1(start.model(), pairs);

    auto kg_run = [&](bool kd) {
      train::RunConfig c = warm;
      c.train.steps = 400;
      c.train.interleave = 0.5;
      c.train.objectives = {true, true, true, kd, false, false};
      train::Trainer<float> t(c, graph, pairs, vocab, &start.model().parameters());
      while (!t.finished()) t.step();
      return pair_r1(t.model(), pairs);
    };
    const double with_kd = kg_run(true), without = kg_run(false);
    drop_kd.push_back(before - with_kd);
    drop_plain.push_back(before - without);
    per_seed += " [" + fmt("%.3f", before) + "->" + fmt("%.3f", with_kd) + "/" + fmt("%.3f", without) + "]";
  }
  const double mk = median(drop_kd), mp = median(drop_plain);
  return {mk <= 0.5 * mp, "median R@1 drop with KD " + fmt("%.4f", mk) + " <= half of " +
                              fmt("%.4f", mp) + " without; per seed [warm->kd/plain]:" + per_seed};
}

// -- 8 ------------------------------------------------------------------------

Outcome ablations() {
  enum Which { kFull, kNoE2e, kNoE2r, kNoG2e };
  std::vector<double> e2e[2], rel[2], g2e[2];
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto graph = kg::synth_graph(small_graph(300 + seed));
    const auto vocab = model::build_vocabulary(graph, {}, small_model().encoder.vocab_size);
    const auto all = all_triplets(graph);
    auto run = [&](Which w) {
      train::RunConfig c;
      c.model = small_model();
      c.train.steps = 300;
      c.train.warmup = 30;
      c.train.lr_encoder = 1e-3;
      c.train.batch_size = 8;
      c.train.seed = seed;
      c.train.objectives = {w != kNoE2e, w != kNoE2r, w != kNoG2e, false, false, false};
      train::Trainer<float> t(c, graph, {}, vocab);
      while (!t.finished()) t.step();
      return eval::triplet_eval(t.model(), graph, all, c.train.batch_size, 0);
    };
    const auto full = run(kFull);
    e2e[0].push_back(full.e2e_r1);
    rel[0].push_back(full.relation_accuracy);
    g2e[0].push_back(full.g2e_r1);
    e2e[1].push_back(run(kNoE2e).e2e_r1);
    rel[1].push_back(run(kNoE2r).relation_accuracy);
    g2e[1].push_back(run(kNoG2e).g2e_r1);
  }
  const double fe = median(e2e[0]), ae = median(e2e[1]), fr = median(rel[0]), ar = median(rel[1]),
               fg = median(g2e[0]), ag = median(g2e[1]);
  return {fe > ae && fr > ar && fg > ag,
          "medians full vs ablated: E2E R@1 " + fmt("%.4f", fe) + " vs " + fmt("%.4f", ae) +
              ", relation acc " + fmt("%.4f", fr) + " vs " + fmt("%.4f", ar) + ", G2E R@1 " +
              fmt("%.4f", fg) + " vs " + fmt("%.4f", ag)};
}

// -- 9 ------------------------------------------------------------------------

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto graph = kg::synth_graph(small_graph(400));
  const auto pairs = kg::synth_pairs(16, 401, 16, 3);
  std::vector<std::string> captions;
  for (const auto& p : pairs) captions.push_back(p.caption);
  const auto vocab = model::build_vocabulary(graph, captions, small_model().encoder.vocab_size);
  train::RunConfig c;
  c.model = small_model();
  c.train.steps = 40;
  c.train.warmup = 5;
  c.train.batch_size = 8;
  c.train.pair_batch_size = 8;
  c.train.seed = 11;
  const fs::path dir = fs::temp_directory_path() / "kclip_acceptance";
  fs::create_directories(dir);

  auto run = [&](const fs::path& metrics) {
    train::Trainer<float> t(c, graph, pairs, vocab);
    std::ofstream out(metrics);
    while (!t.finished()) out << train::metrics_line(t.step()) << '\n';
    return t.checkpoint();
  };
  const auto ck_a = run(dir / "metrics_a.jsonl");
  run(dir / "metrics_b.jsonl");
  const bool same_metrics = bytes_of(dir / "metrics_a.jsonl") == bytes_of(dir / "metrics_b.jsonl") &&
                            !bytes_of(dir / "metrics_a.jsonl").empty();

  train::save_checkpoint(ck_a, dir / "a.kclip");
  const auto loaded = train::load_checkpoint(dir / "a.kclip");
  train::save_checkpoint(loaded, dir / "b.kclip");
  const bool same_bytes = bytes_of(dir / "a.kclip") == bytes_of(dir / "b.kclip");

  const auto all = all_triplets(graph);
  const std::size_t ks[] = {1, 5};
  auto outputs = [&](const train::Checkpoint& ck) {
    const auto m = train::model_from_checkpoint<float>(ck);
    std::ostringstream s;
    s.precision(17);
    const auto tr = eval::triplet_eval(*m, graph, all, 8, 0);
    s << tr.relation_accuracy << ' ' << tr.e2e_r1 << ' ' << tr.g2e_r1;
    for (const auto& r : eval::retrieval_eval(*m, pairs, ks))
      for (double x : r.recall) s << ' ' << x;
    Tape<float> tape(false);
    std::vector<const kg::Image*> ims;
    for (const auto& p : pairs) ims.push_back(&p.image);
    for (float x : tape.value(m->pooled_images(tape, ims, model::ForwardContext::eval())).values()) s << ' ' << x;
    return s.str();
  };
  const bool same_eval = outputs(ck_a) == outputs(loaded);
  fs::remove_all(dir);
  return {same_metrics && same_bytes && same_eval,
          std::string("metrics files ") + (same_metrics ? "identical" : "DIFFER") +
              "; save/load/save bytes " + (same_bytes ? "identical" : "DIFFER") +
              "; eval outputs and pooled features after round trip " +
              (same_eval ? "bit-identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  std::string overfit_property;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"loss identities", loss_identities},
      {"loop-oracle equivalence", loop_oracles},
      {"GNN correctness", gnn_oracle},
      {"masked-slot independence", masked_substitution},
      {"overfit", [&] { return overfit(overfit_property); }},
      {"continual learning with KD", continual_learning},
      {"ablation harness", ablations},
      {"determinism and persistence", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(n)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << criteria[i].first
              << "): " << o.detail << " [" << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
    if (n == 6) std::cout << "     trainer property: " << overfit_property << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed"
                       : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failed ? 1 : 0;
}
