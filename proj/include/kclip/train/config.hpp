// SPDX-License-Identifier: Apache-2.0
//
// Training configuration and its JSON form. Unknown keys are rejected so
// that a typo in a config file fails loudly.

#ifndef KCLIP_TRAIN_CONFIG_HPP_
#define KCLIP_TRAIN_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "kclip/model/knowledge_clip.hpp"

namespace kclip::model {

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const FusionConfig& c);
void from_json(const nlohmann::json& j, FusionConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace kclip::model

namespace kclip::train {

struct Objectives {
  bool e2e = true;
  bool e2r = true;
  bool g2e = true;
  bool kd = true;
  /// Symmetric InfoNCE on pair batches; used for the warm start.
  bool clip = false;
  /// Adds the head-masked direction to E2E.
  bool symmetric_e2e = false;

  bool operator==(const Objectives&) const = default;
  bool any_graph() const { return e2e || e2r || g2e; }
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t warmup = 100;
  double lr_encoder = 1e-5;
  double lr_fusion = 1e-3;
  double weight_decay = 0.05;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t pair_batch_size = 16;
  double interleave = 0.5;
  std::uint64_t seed = 0;
  int precision = 32;
  Objectives objectives;

  bool operator==(const TrainConfig&) const = default;

  /// Throws std::invalid_argument on violated invariants.
  void validate() const;
};

struct RunConfig {
  model::ModelConfig model;
  TrainConfig train;
  bool operator==(const RunConfig&) const = default;
};

void to_json(nlohmann::json& j, const Objectives& c);
void from_json(const nlohmann::json& j, Objectives& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Reads {"model": {...}, "train": {...}} over defaults; absent keys keep
/// their defaults. Throws DataError on unreadable files or unknown keys.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace kclip::train

#endif  // KCLIP_TRAIN_CONFIG_HPP_
