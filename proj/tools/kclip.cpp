// SPDX-License-Identifier: Apache-2.0
//
// kclip: synth, ingest, convert-pairs, train, eval, probe, grad-check and
// inspect-checkpoint. Exit codes: 0 ok, 1 usage, 2 data, 3 numeric.
// KCLIP_LOG=0 silences progress lines on stderr, 2 adds per-step lines.

#include <Eigen/Core>
#include <zlib.h>

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kclip/errors.hpp"
#include "kclip/eval/eval.hpp"
#include "kclip/kg/jsonl.hpp"
#include "kclip/kg/synth.hpp"
#include "kclip/train/checkpoint.hpp"
#include "kclip/train/config.hpp"
#include "kclip/train/grad_suite.hpp"
#include "kclip/train/trainer.hpp"

#ifndef KCLIP_VERSION
#define KCLIP_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kclip;

namespace {

int log_level() {
  const char* v = std::getenv("KCLIP_LOG");
  return v ? std::atoi(v) : 1;
}

void info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << msg << '\n';
}

std::uint32_t crc_of(const std::string& s) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

std::string hex(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "missing";
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex(crc_of(bytes));
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Written when a command starts and rewritten with the outcome, so a run
// that dies still leaves its inputs and settings behind.
class Manifest {
 public:
  Manifest(std::string verb, std::vector<std::string> argv) {
    doc_["verb"] = std::move(verb);
    doc_["argv"] = std::move(argv);
    doc_["versions"] = {{"kclip", KCLIP_VERSION},
                        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                      std::to_string(EIGEN_MINOR_VERSION)},
                        {"zlib", ZLIB_VERSION},
                        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                        {"cli11", CLI11_VERSION},
                        {"compiler", __VERSION__}};
    doc_["status"] = "running";
  }

  json& operator[](const char* key) { return doc_[key]; }

  void set_path(fs::path p) { path_ = std::move(p); }
  const fs::path& path() const { return path_; }

  void settings(const json& s) {
    doc_["settings"] = s;
    doc_["config_hash"] = hex(crc_of(s.dump()));
    if (s.contains("seed")) doc_["seed"] = s["seed"];
  }

  void input(const std::string& role, const fs::path& p) {
    doc_["inputs"][role] = {{"path", p.string()}, {"crc32", file_digest(p)}};
  }

  void output(const std::string& role, const fs::path& p) { doc_["outputs"][role] = p.string(); }

  void finish(int code, const std::string& message) {
    doc_["status"] = code == 0 ? "ok" : "failed";
    doc_["exit_code"] = code;
    if (!message.empty()) doc_["message"] = message;
    flush();
  }

  void flush() const {
    if (path_.empty()) return;
    try {
      write_json(path_, doc_);
    } catch (const std::exception& e) {
      std::cerr << "warning: manifest not written: " << e.what() << '\n';
    }
  }

 private:
  json doc_;
  fs::path path_;
};

fs::path beside(const fs::path& output, const std::string& verb) {
  if (output.empty()) return fs::path("kclip-" + verb + ".manifest.json");
  return fs::path(output.string() + ".manifest.json");
}

std::vector<std::string> all_captions(const std::vector<kg::ImageTextPair>& pairs) {
  std::vector<std::string> out;
  for (const auto& p : pairs) out.push_back(p.caption);
  return out;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  kg::SynthSpec spec;
  fs::path out;
  std::size_t pairs = 0;
  fs::path pairs_out;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  auto* c = app.add_subcommand("synth", "Generate a synthetic knowledge graph");
  c->add_option("--entities", a.spec.entities, "Entity count")->capture_default_str();
  c->add_option("--relations", a.spec.relations, "Relation count")->capture_default_str();
  c->add_option("--triplets", a.spec.triplets, "Triplet count")->capture_default_str();
  c->add_option("--seed", a.spec.seed, "Generator seed")->capture_default_str();
  c->add_option("--image-size", a.spec.image_size, "Image side in pixels")->capture_default_str();
  c->add_option("-o,--output", a.out, "Graph JSONL path")->required();
  c->add_option("--pairs", a.pairs, "Also write this many image-text pairs");
  c->add_option("--pairs-output", a.pairs_out, "Pairs JSONL path (default <output>.pairs.jsonl)");
}

int run_synth(const SynthArgs& a, Manifest& m) {
  m.set_path(beside(a.out, "synth"));
  m.settings({{"entities", a.spec.entities},
              {"relations", a.spec.relations},
              {"triplets", a.spec.triplets},
              {"seed", a.spec.seed},
              {"image_size", a.spec.image_size},
              {"pairs", a.pairs}});
  m.flush();
  const auto graph = kg::synth_graph(a.spec);
  kg::write_graph(graph, a.out);
  m.output("graph", a.out);
  if (a.pairs > 0) {
    const fs::path p = a.pairs_out.empty() ? fs::path(a.out.string() + ".pairs.jsonl") : a.pairs_out;
    kg::write_pairs(kg::synth_pairs(a.pairs, a.spec.seed, a.spec.image_size, a.spec.channels), p);
    m.output("pairs", p);
  }
  std::cout << json{{"entities", graph.entities().size()},
                    {"relations", graph.relations().size()},
                    {"triplets", graph.triplets().size()}}
                   .dump()
            << '\n';
  return 0;
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
  fs::path graph;
  fs::path out;
};

void add_ingest(CLI::App& app, IngestArgs& a) {
  auto* c = app.add_subcommand("ingest", "Validate a graph JSONL file and print statistics");
  c->add_option("graph", a.graph, "Graph JSONL path")->required();
  c->add_option("-o,--output", a.out, "Rewrite the validated graph here");
}

json graph_stats(const kg::KnowledgeGraph& g) {
  std::size_t texts = 0, images = 0;
  for (const auto& e : g.entities()) {
    texts += e.texts.size();
    images += e.images.size();
  }
  json rel = json::object();
  for (const auto& r : g.relations()) rel[r.name] = 0;
  for (const auto& t : g.triplets()) rel[g.relation(t.relation).name] = rel[g.relation(t.relation).name].get<int>() + 1;
  return {{"entities", g.entities().size()},
          {"relations", g.relations().size()},
          {"triplets", g.triplets().size()},
          {"text_descriptions", texts},
          {"image_descriptions", images},
          {"triplets_per_relation", rel}};
}

int run_ingest(const IngestArgs& a, Manifest& m) {
  m.set_path(beside(a.out.empty() ? a.graph : a.out, "ingest"));
  m.settings({{"graph", a.graph.string()}, {"output", a.out.string()}});
  m.input("graph", a.graph);
  m.flush();
  const auto graph = kg::ingest_graph(a.graph);
  if (!a.out.empty()) {
    kg::write_graph(graph, a.out);
    m.output("graph", a.out);
  }
  std::cout << graph_stats(graph).dump() << '\n';
  return 0;
}

// ---- convert-pairs --------------------------------------------------------

struct ConvertArgs {
  fs::path pairs;
  fs::path graph;
  fs::path out;
};

void add_convert(CLI::App& app, ConvertArgs& a) {
  auto* c = app.add_subcommand("convert-pairs",
                               "Turn image-text pairs into graph entities and triplets");
  c->add_option("pairs", a.pairs, "Pairs JSONL path")->required();
  c->add_option("--graph", a.graph, "Existing graph to extend");
  c->add_option("-o,--output", a.out, "Graph JSONL path")->required();
}

int run_convert(const ConvertArgs& a, Manifest& m) {
  m.set_path(beside(a.out, "convert-pairs"));
  m.settings({{"pairs", a.pairs.string()}, {"graph", a.graph.string()}});
  m.input("pairs", a.pairs);
  if (!a.graph.empty()) m.input("graph", a.graph);
  m.flush();
  kg::KnowledgeGraph graph = a.graph.empty() ? kg::KnowledgeGraph{} : kg::ingest_graph(a.graph);
  for (auto& p : kg::read_pairs(a.pairs)) kg::convert_pair(graph, std::move(p.image), std::move(p.caption));
  kg::write_graph(graph, a.out);
  m.output("graph", a.out);
  std::cout << graph_stats(graph).dump() << '\n';
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  fs::path config, graph, pairs, out = "run", resume, init;
  std::size_t checkpoint_every = 500, eval_every = 0;
  // Overrides; unset fields keep the file or default value.
  std::optional<std::size_t> steps, warmup, batch_size, pair_batch_size, seed, precision;
  std::optional<double> lr_encoder, lr_fusion, weight_decay, clip_norm, interleave;
  std::vector<std::string> enable, disable;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* c = app.add_subcommand("train", "Train a model; writes metrics, checkpoint and manifest");
  c->add_option("--config", a.config, "Run config JSON (flags take precedence)");
  c->add_option("--graph", a.graph, "Graph JSONL path");
  c->add_option("--pairs", a.pairs, "Image-text pairs JSONL path");
  c->add_option("--out", a.out, "Output directory")->capture_default_str();
  c->add_option("--resume", a.resume, "Continue from a checkpoint");
  c->add_option("--init", a.init, "Start from a checkpoint's weights with a fresh optimizer");
  c->add_option("--checkpoint-every", a.checkpoint_every, "Steps between checkpoints (0: end only)")
      ->capture_default_str();
  c->add_option("--eval-every", a.eval_every, "Steps between triplet evaluations (0: never)")
      ->capture_default_str();
  c->add_option("--steps", a.steps);
  c->add_option("--warmup", a.warmup);
  c->add_option("--lr-encoder", a.lr_encoder);
  c->add_option("--lr-fusion", a.lr_fusion);
  c->add_option("--weight-decay", a.weight_decay);
  c->add_option("--clip-norm", a.clip_norm);
  c->add_option("--batch-size", a.batch_size);
  c->add_option("--pair-batch-size", a.pair_batch_size);
  c->add_option("--interleave", a.interleave, "Probability of a pair batch per step");
  c->add_option("--seed", a.seed);
  c->add_option("--precision", a.precision)->check(CLI::IsMember({32, 64}));
  const std::vector<std::string> names{"e2e", "e2r", "g2e", "kd", "clip", "symmetric-e2e"};
  c->add_option("--enable", a.enable, "Objectives to switch on")->check(CLI::IsMember(names));
  c->add_option("--disable", a.disable, "Objectives to switch off")->check(CLI::IsMember(names));
}

void set_objective(train::Objectives& o, const std::string& name, bool on) {
  if (name == "e2e") o.e2e = on;
  if (name == "e2r") o.e2r = on;
  if (name == "g2e") o.g2e = on;
  if (name == "kd") o.kd = on;
  if (name == "clip") o.clip = on;
  if (name == "symmetric-e2e") o.symmetric_e2e = on;
}

train::RunConfig resolve_config(const TrainArgs& a, train::RunConfig cfg) {
  auto& t = cfg.train;
  if (a.steps) t.steps = *a.steps;
  if (a.warmup) t.warmup = *a.warmup;
  if (a.batch_size) t.batch_size = *a.batch_size;
  if (a.pair_batch_size) t.pair_batch_size = *a.pair_batch_size;
  if (a.seed) t.seed = *a.seed;
  if (a.precision) t.precision = *a.precision;
  if (a.lr_encoder) t.lr_encoder = *a.lr_encoder;
  if (a.lr_fusion) t.lr_fusion = *a.lr_fusion;
  if (a.weight_decay) t.weight_decay = *a.weight_decay;
  if (a.clip_norm) t.clip_norm = *a.clip_norm;
  if (a.interleave) t.interleave = *a.interleave;
  for (const auto& n : a.enable) set_objective(t.objectives, n, true);
  for (const auto& n : a.disable) set_objective(t.objectives, n, false);
  t.validate();
  return cfg;
}

void save_atomically(const train::Checkpoint& ckpt, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  train::save_checkpoint(ckpt, tmp);
  fs::rename(tmp, path);
}

template <typename Real>
int train_loop(train::Trainer<Real>& trainer, const kg::KnowledgeGraph& graph, const TrainArgs& a,
               Manifest& m) {
  const fs::path metrics = a.out / "metrics.jsonl";
  const fs::path evals = a.out / "eval.jsonl";
  const fs::path ckpt_path = a.out / "checkpoint.kclip";
  std::ofstream log(metrics, a.resume.empty() ? std::ios::trunc : std::ios::app);
  std::ofstream eval_log;
  if (a.eval_every > 0) eval_log.open(evals, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot write " + metrics.string());
  m.output("metrics", metrics);
  m.output("checkpoint", ckpt_path);
  if (a.eval_every > 0) m.output("eval", evals);
  std::vector<std::size_t> all(graph.triplets().size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  std::string last_good = a.resume.empty() ? "none" : a.resume.string();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    while (!trainer.finished()) {
      const auto r = trainer.step();
      log << train::metrics_line(r) << '\n';
      const std::size_t done = trainer.steps_done();
      if (log_level() >= 2) std::cerr << train::metrics_line(r) << '\n';
      if (a.eval_every > 0 && done % a.eval_every == 0 && !all.empty()) {
        auto rep = eval::to_json(eval::triplet_eval(trainer.model(), graph, all,
                                                    trainer.config().train.batch_size, 0));
        rep["step"] = done;
        eval_log << rep.dump() << '\n' << std::flush;
        info("step " + std::to_string(done) + " " + rep.dump());
      }
      if (a.checkpoint_every > 0 && done % a.checkpoint_every == 0) {
        log.flush();
        save_atomically(trainer.checkpoint(), ckpt_path);
        last_good = ckpt_path.string();
        info("step " + std::to_string(done) + " checkpoint " + last_good);
      }
    }
  } catch (const NumericError& e) {
    log.flush();
    throw NumericError(std::string(e.what()) + "; last good checkpoint: " + last_good);
  }
  log.flush();
  save_atomically(trainer.checkpoint(), ckpt_path);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m["wall_seconds"] = secs;
  m["parameter_digest"] = hex(train::parameter_digest(trainer.model().parameters()));
  info("trained to step " + std::to_string(trainer.steps_done()) + " in " +
       std::to_string(secs) + " s; checkpoint " + ckpt_path.string());
  return 0;
}

template <typename Real>
int run_train_as(const TrainArgs& a, const train::RunConfig& cfg, const kg::KnowledgeGraph& graph,
                 std::vector<kg::ImageTextPair> pairs, std::optional<train::Checkpoint> resume,
                 Manifest& m) {
  if (resume) {
    train::Trainer<Real> trainer(*resume, graph, std::move(pairs));
    return train_loop(trainer, graph, a, m);
  }
  if (!a.init.empty()) {
    const auto init = train::load_checkpoint(a.init);
    if (init.relations != graph.relations().size()) {
      throw DataError(a.init.string() + " was trained for " + std::to_string(init.relations) +
                      " relations, graph has " + std::to_string(graph.relations().size()));
    }
    if (init.config.model != cfg.model) {
      throw DataError(a.init.string() + " has a different model configuration");
    }
    auto start = train::model_from_checkpoint<Real>(init);
    train::Trainer<Real> trainer(cfg, graph, std::move(pairs), start->tokenizer().vocabulary(),
                                 &start->parameters());
    return train_loop(trainer, graph, a, m);
  }
  auto vocab = model::build_vocabulary(graph, all_captions(pairs), cfg.model.encoder.vocab_size);
  train::Trainer<Real> trainer(cfg, graph, std::move(pairs), std::move(vocab));
  return train_loop(trainer, graph, a, m);
}

int run_train(const TrainArgs& a, Manifest& m) {
  m.set_path(a.out / "manifest.json");
  fs::create_directories(a.out);
  if (!a.resume.empty() && !a.init.empty()) {
    throw CLI::ValidationError("--resume and --init are exclusive");
  }
  std::optional<train::Checkpoint> resume;
  train::RunConfig cfg;
  if (!a.resume.empty()) {
    m.input("resume", a.resume);
    resume = train::load_checkpoint(a.resume);
    cfg = resume->config;
    // Only the step budget may change on resume; anything else would break
    // bit-exact continuation.
    if (a.steps) cfg.train.steps = *a.steps;
    resume->config = cfg;
  } else {
    if (!a.config.empty()) {
      m.input("config", a.config);
      cfg = train::load_run_config(a.config);
    }
    cfg = resolve_config(a, cfg);
  }
  json settings = cfg;
  settings["seed"] = cfg.train.seed;
  settings["graph"] = a.graph.string();
  settings["pairs"] = a.pairs.string();
  settings["resume"] = a.resume.string();
  settings["init"] = a.init.string();
  m.settings(settings);
  if (!a.init.empty()) m.input("init", a.init);
  m.flush();

  kg::KnowledgeGraph graph;
  if (!a.graph.empty()) {
    if (!fs::exists(a.graph)) throw DataError("graph file not found: " + a.graph.string());
    m.input("graph", a.graph);
    graph = kg::ingest_graph(a.graph);
  } else if (cfg.train.objectives.any_graph()) {
    throw CLI::ValidationError("--graph is required while a graph objective is enabled");
  }
  std::vector<kg::ImageTextPair> pairs;
  if (!a.pairs.empty()) {
    if (!fs::exists(a.pairs)) throw DataError("pairs file not found: " + a.pairs.string());
    m.input("pairs", a.pairs);
    pairs = kg::read_pairs(a.pairs);
  }
  m.flush();
  write_json(a.out / "config.json", json(cfg));
  if (cfg.train.precision == 64) {
    return run_train_as<double>(a, cfg, graph, std::move(pairs), std::move(resume), m);
  }
  return run_train_as<float>(a, cfg, graph, std::move(pairs), std::move(resume), m);
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  fs::path checkpoint, graph, pairs, out;
  std::vector<std::size_t> ks{1, 5, 10};
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* c = app.add_subcommand("eval", "Triplet and retrieval evaluation of a checkpoint");
  c->add_option("checkpoint", a.checkpoint, "Checkpoint path")->required();
  c->add_option("--graph", a.graph, "Graph for relation, E2E and G2E metrics");
  c->add_option("--pairs", a.pairs, "Pairs for image-text retrieval");
  c->add_option("--ks", a.ks, "Recall cutoffs")->delimiter(',')->capture_default_str();
  c->add_option("--batch-size", a.batch_size, "Triplet batch size")->capture_default_str();
  c->add_option("--seed", a.seed, "Description-choice seed")->capture_default_str();
  c->add_option("-o,--output", a.out, "Report JSON path (default stdout only)");
}

template <typename Real>
json evaluate_as(const EvalArgs& a, const train::Checkpoint& ckpt) {
  const auto model = train::model_from_checkpoint<Real>(ckpt);
  json report{{"step", ckpt.step}};
  if (!a.graph.empty()) {
    const auto graph = kg::ingest_graph(a.graph);
    if (graph.relations().size() != ckpt.relations) {
      throw DataError(a.graph.string() + " has " + std::to_string(graph.relations().size()) +
                      " relations, checkpoint expects " + std::to_string(ckpt.relations));
    }
    std::vector<std::size_t> all(graph.triplets().size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    report["triplets"] = eval::to_json(eval::triplet_eval(*model, graph, all, a.batch_size, a.seed));
  }
  if (!a.pairs.empty()) {
    const auto pairs = kg::read_pairs(a.pairs);
    json r = json::array();
    for (const auto& rep : eval::retrieval_eval(*model, pairs, a.ks)) r.push_back(eval::to_json(rep));
    report["retrieval"] = r;
  }
  return report;
}

int run_eval(const EvalArgs& a, Manifest& m) {
  m.set_path(beside(a.out, "eval"));
  m.settings({{"checkpoint", a.checkpoint.string()},
              {"graph", a.graph.string()},
              {"pairs", a.pairs.string()},
              {"ks", a.ks},
              {"batch_size", a.batch_size},
              {"seed", a.seed}});
  m.input("checkpoint", a.checkpoint);
  if (!a.graph.empty()) m.input("graph", a.graph);
  if (!a.pairs.empty()) m.input("pairs", a.pairs);
  m.flush();
  if (a.graph.empty() && a.pairs.empty()) {
    throw CLI::ValidationError("eval needs --graph, --pairs or both");
  }
  const auto ckpt = train::load_checkpoint(a.checkpoint);
  const json report = ckpt.config.train.precision == 64 ? evaluate_as<double>(a, ckpt)
                                                        : evaluate_as<float>(a, ckpt);
  if (!a.out.empty()) {
    write_json(a.out, report);
    m.output("report", a.out);
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

// ---- probe ----------------------------------------------------------------

struct ProbeArgs {
  fs::path checkpoint, pairs, out, csv;
  std::vector<std::string> templates{"a photo of {}.", "{}", "an image showing {}",
                                     "this is {}, a pattern"};
  std::size_t classes = 8;
};

void add_probe(CLI::App& app, ProbeArgs& a) {
  auto* c = app.add_subcommand("probe", "Prompt-template sensitivity of zero-shot predictions");
  c->add_option("checkpoint", a.checkpoint, "Checkpoint path")->required();
  c->add_option("--pairs", a.pairs, "Pairs JSONL; each distinct caption is a class")->required();
  c->add_option("--template", a.templates, "Prompt template with {} for the class name")
      ->capture_default_str();
  c->add_option("--classes", a.classes, "Use the first N distinct captions")->capture_default_str();
  c->add_option("-o,--output", a.out, "Report JSON path");
  c->add_option("--csv", a.csv, "Per-class divergence table");
}

int run_probe(const ProbeArgs& a, Manifest& m) {
  m.set_path(beside(a.out, "probe"));
  m.settings({{"checkpoint", a.checkpoint.string()},
              {"pairs", a.pairs.string()},
              {"templates", a.templates},
              {"classes", a.classes}});
  m.input("checkpoint", a.checkpoint);
  m.input("pairs", a.pairs);
  m.flush();
  const auto ckpt = train::load_checkpoint(a.checkpoint);
  const auto pairs = kg::read_pairs(a.pairs);
  std::vector<std::string> classes;
  std::vector<const kg::Image*> images;
  std::set<std::string> seen;
  for (const auto& p : pairs) {
    if (classes.size() == a.classes) break;
    if (seen.insert(p.caption).second) {
      classes.push_back(p.caption);
      images.push_back(&p.image);
    }
  }
  eval::ProbeReport rep;
  if (ckpt.config.train.precision == 64) {
    rep = eval::template_probe(*train::model_from_checkpoint<double>(ckpt), classes, images, a.templates);
  } else {
    rep = eval::template_probe(*train::model_from_checkpoint<float>(ckpt), classes, images, a.templates);
  }
  const json report = eval::to_json(rep);
  if (!a.out.empty()) {
    write_json(a.out, report);
    m.output("report", a.out);
  }
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw DataError("cannot write " + a.csv.string());
    out << "class,mean_js\n";
    for (std::size_t i = 0; i < rep.classes.size(); ++i) {
      out << '"' << rep.classes[i] << "\"," << rep.class_js[i] << '\n';
    }
    m.output("csv", a.csv);
  }
  std::cout << json{{"divergence", rep.divergence}, {"mean_js", rep.mean_js}, {"classes", rep.classes.size()}}.dump()
            << '\n';
  return 0;
}

// ---- grad-check -----------------------------------------------------------

struct GradArgs {
  int precision = 64;
  std::size_t seeds = 20;
  std::uint64_t first_seed = 0;
  std::size_t coords = 2;
  double tolerance = 1e-4;
  bool ops_only = false;
  fs::path out;
};

void add_grad(CLI::App& app, GradArgs& a) {
  auto* c = app.add_subcommand("grad-check", "Finite-difference check of every op and loss");
  c->add_option("--precision", a.precision, "Only 64-bit is supported")
      ->check(CLI::IsMember({64}))
      ->capture_default_str();
  c->add_option("--seeds", a.seeds)->capture_default_str();
  c->add_option("--first-seed", a.first_seed)->capture_default_str();
  c->add_option("--coords", a.coords, "Checked coordinates per model parameter")
      ->capture_default_str();
  c->add_option("--tolerance", a.tolerance)->capture_default_str();
  c->add_flag("--ops-only", a.ops_only, "Skip the model-parameter checks");
  c->add_option("-o,--output", a.out, "Per-case report JSON");
}

int run_grad(const GradArgs& a, Manifest& m) {
  m.set_path(beside(a.out, "grad-check"));
  m.settings({{"precision", a.precision},
              {"seeds", a.seeds},
              {"seed", a.first_seed},
              {"coords", a.coords},
              {"tolerance", a.tolerance},
              {"ops_only", a.ops_only}});
  m.flush();
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = train::run_grad_suite(a.first_seed, a.seeds, !a.ops_only, a.coords);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = rep.max_rel_err < a.tolerance;
  json summary{{"cases", rep.entries.size()},
               {"max_rel_err", rep.max_rel_err},
               {"worst", rep.worst},
               {"tolerance", a.tolerance},
               {"seconds", secs},
               {"pass", ok}};
  m["result"] = summary;
  if (!a.out.empty()) {
    json cases = json::array();
    for (const auto& e : rep.entries) {
      cases.push_back({{"name", e.name},
                       {"seed", e.seed},
                       {"max_rel_err", e.report.max_rel_err},
                       {"coordinates", e.report.coordinates},
                       {"worst", e.report.worst}});
    }
    write_json(a.out, {{"summary", summary}, {"cases", cases}});
    m.output("report", a.out);
  }
  std::cout << "max rel err " << rep.max_rel_err << " over " << rep.entries.size() << " cases ("
            << rep.worst << ") " << (ok ? "PASS" : "FAIL") << '\n';
  if (!ok) throw NumericError("gradient check exceeded tolerance " + std::to_string(a.tolerance));
  return 0;
}

// ---- inspect-checkpoint ---------------------------------------------------

struct InspectArgs {
  fs::path checkpoint;
};

void add_inspect(CLI::App& app, InspectArgs& a) {
  auto* c = app.add_subcommand("inspect-checkpoint", "Verify and summarize a checkpoint");
  c->add_option("checkpoint", a.checkpoint, "Checkpoint path")->required();
}

int run_inspect(const InspectArgs& a, Manifest& m) {
  m.set_path(beside(a.checkpoint, "inspect"));
  m.settings({{"checkpoint", a.checkpoint.string()}});
  m.input("checkpoint", a.checkpoint);
  m.flush();
  const auto ckpt = train::load_checkpoint(a.checkpoint);
  std::size_t elements = 0;
  json params = json::array();
  for (const auto& [name, t] : ckpt.student) {
    elements += t.size();
    params.push_back({{"name", name}, {"shape", t.shape()}});
  }
  const json out{{"format_version", 1},
                 {"step", ckpt.step},
                 {"optimizer_steps", ckpt.optimizer_steps},
                 {"relations", ckpt.relations},
                 {"vocabulary", ckpt.vocabulary.size()},
                 {"parameters", ckpt.student.size()},
                 {"elements", elements},
                 {"teacher", !ckpt.teacher.empty()},
                 {"config", ckpt.config},
                 {"tensors", params}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-CLIP at desk scale"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KCLIP_VERSION);
  SynthArgs synth;
  IngestArgs ingest;
  ConvertArgs convert;
  TrainArgs trn;
  EvalArgs ev;
  ProbeArgs probe;
  GradArgs grad;
  InspectArgs inspect;
  add_synth(app, synth);
  add_ingest(app, ingest);
  add_convert(app, convert);
  add_train(app, trn);
  add_eval(app, ev);
  add_probe(app, probe);
  add_grad(app, grad);
  add_inspect(app, inspect);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string verb = app.get_subcommands().front()->get_name();
  Manifest manifest(verb, std::vector<std::string>(argv, argv + argc));
  int code = 0;
  std::string message;
  try {
    if (verb == "synth") code = run_synth(synth, manifest);
    else if (verb == "ingest") code = run_ingest(ingest, manifest);
    else if (verb == "convert-pairs") code = run_convert(convert, manifest);
    else if (verb == "train") code = run_train(trn, manifest);
    else if (verb == "eval") code = run_eval(ev, manifest);
    else if (verb == "probe") code = run_probe(probe, manifest);
    else if (verb == "grad-check") code = run_grad(grad, manifest);
    else code = run_inspect(inspect, manifest);
  } catch (const CLI::ValidationError& e) {
    code = 1;
    message = e.what();
  } catch (const std::invalid_argument& e) {
    code = 1;
    message = e.what();
  } catch (const NumericError& e) {
    code = 3;
    message = e.what();
  } catch (const DataError& e) {
    code = 2;
    message = e.what();
  } catch (const json::exception& e) {
    code = 2;
    message = e.what();
  } catch (const fs::filesystem_error& e) {
    code = 2;
    message = e.what();
  } catch (const std::exception& e) {
    code = 2;
    message = e.what();
  }
  if (!message.empty()) std::cerr << "kclip " << verb << ": " << message << '\n';
  manifest.finish(code, message);
  return code;
}
