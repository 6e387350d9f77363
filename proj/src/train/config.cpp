// SPDX-License-Identifier: Apache-2.0

#include "kclip/train/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "kclip/errors.hpp"

namespace kclip {

using nlohmann::json;

void train::TrainConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("steps must be positive");
  if (warmup >= steps) throw std::invalid_argument("warmup must be shorter than steps");
  if (!(lr_encoder > 0) || !(lr_fusion > 0)) {
    throw std::invalid_argument("learning rates must be positive");
  }
  if (weight_decay < 0 || !(clip_norm > 0)) {
    throw std::invalid_argument("weight decay must be >= 0 and clip norm > 0");
  }
  if (batch_size == 0 || pair_batch_size == 0) throw std::invalid_argument("empty batch size");
  if (interleave < 0 || interleave > 1) throw std::invalid_argument("interleave outside [0, 1]");
  if (precision != 32 && precision != 64) throw std::invalid_argument("precision must be 32 or 64");
}

namespace {

/// Assigns j[key] to field when present; collects seen keys.
template <typename T>
void read(const json& j, const char* key, T& field, std::set<std::string>& seen) {
  seen.insert(key);
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const char* where) {
  if (!j.is_object()) throw DataError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!seen.contains(key)) throw DataError(std::string(where) + ": unknown key '" + key + "'");
  }
}

}  // namespace

namespace model {

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"layers", c.layers},         {"width", c.width},
           {"heads", c.heads},           {"mlp_ratio", c.mlp_ratio},
           {"output_dim", c.output_dim}, {"image_size", c.image_size},
           {"channels", c.channels},     {"patch_size", c.patch_size},
           {"text_length", c.text_length}, {"vocab_size", c.vocab_size},
           {"drop_path", c.drop_path}};
}

void from_json(const json& j, EncoderConfig& c) {
  std::set<std::string> seen;
  read(j, "layers", c.layers, seen);
  read(j, "width", c.width, seen);
  read(j, "heads", c.heads, seen);
  read(j, "mlp_ratio", c.mlp_ratio, seen);
  read(j, "output_dim", c.output_dim, seen);
  read(j, "image_size", c.image_size, seen);
  read(j, "channels", c.channels, seen);
  read(j, "patch_size", c.patch_size, seen);
  read(j, "text_length", c.text_length, seen);
  read(j, "vocab_size", c.vocab_size, seen);
  read(j, "drop_path", c.drop_path, seen);
  reject_unknown(j, seen, "encoder");
}

void to_json(json& j, const FusionConfig& c) {
  j = json{{"layers", c.layers},       {"width", c.width},
           {"heads", c.heads},         {"mlp_ratio", c.mlp_ratio},
           {"drop_path", c.drop_path}, {"final_norm", c.final_norm}};
}

void from_json(const json& j, FusionConfig& c) {
  std::set<std::string> seen;
  read(j, "layers", c.layers, seen);
  read(j, "width", c.width, seen);
  read(j, "heads", c.heads, seen);
  read(j, "mlp_ratio", c.mlp_ratio, seen);
  read(j, "drop_path", c.drop_path, seen);
  read(j, "final_norm", c.final_norm, seen);
  reject_unknown(j, seen, "fusion");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"encoder", c.encoder},
           {"fusion", c.fusion},
           {"gnn_layers", c.gnn_layers},
           {"tau_init", c.tau_init}};
}

void from_json(const json& j, ModelConfig& c) {
  std::set<std::string> seen;
  read(j, "encoder", c.encoder, seen);
  read(j, "fusion", c.fusion, seen);
  read(j, "gnn_layers", c.gnn_layers, seen);
  read(j, "tau_init", c.tau_init, seen);
  reject_unknown(j, seen, "model");
}

}  // namespace model

namespace train {

void to_json(json& j, const Objectives& c) {
  j = json{{"e2e", c.e2e}, {"e2r", c.e2r},   {"g2e", c.g2e},
           {"kd", c.kd},   {"clip", c.clip}, {"symmetric_e2e", c.symmetric_e2e}};
}

void from_json(const json& j, Objectives& c) {
  std::set<std::string> seen;
  read(j, "e2e", c.e2e, seen);
  read(j, "e2r", c.e2r, seen);
  read(j, "g2e", c.g2e, seen);
  read(j, "kd", c.kd, seen);
  read(j, "clip", c.clip, seen);
  read(j, "symmetric_e2e", c.symmetric_e2e, seen);
  reject_unknown(j, seen, "objectives");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"steps", c.steps},
           {"warmup", c.warmup},
           {"lr_encoder", c.lr_encoder},
           {"lr_fusion", c.lr_fusion},
           {"weight_decay", c.weight_decay},
           {"clip_norm", c.clip_norm},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon},
           {"batch_size", c.batch_size},
           {"pair_batch_size", c.pair_batch_size},
           {"interleave", c.interleave},
           {"seed", c.seed},
           {"precision", c.precision},
           {"objectives", c.objectives}};
}

void from_json(const json& j, TrainConfig& c) {
  std::set<std::string> seen;
  read(j, "steps", c.steps, seen);
  read(j, "warmup", c.warmup, seen);
  read(j, "lr_encoder", c.lr_encoder, seen);
  read(j, "lr_fusion", c.lr_fusion, seen);
  read(j, "weight_decay", c.weight_decay, seen);
  read(j, "clip_norm", c.clip_norm, seen);
  read(j, "beta1", c.beta1, seen);
  read(j, "beta2", c.beta2, seen);
  read(j, "epsilon", c.epsilon, seen);
  read(j, "batch_size", c.batch_size, seen);
  read(j, "pair_batch_size", c.pair_batch_size, seen);
  read(j, "interleave", c.interleave, seen);
  read(j, "seed", c.seed, seen);
  read(j, "precision", c.precision, seen);
  read(j, "objectives", c.objectives, seen);
  reject_unknown(j, seen, "train");
}

void to_json(json& j, const RunConfig& c) { j = json{{"model", c.model}, {"train", c.train}}; }

void from_json(const json& j, RunConfig& c) {
  std::set<std::string> seen;
  read(j, "model", c.model, seen);
  read(j, "train", c.train, seen);
  reject_unknown(j, seen, "config");
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  RunConfig c;
  try {
    from_json(json::parse(in), c);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return c;
}

}  // namespace train
}  // namespace kclip
