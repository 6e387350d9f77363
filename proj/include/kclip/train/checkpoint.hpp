// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file:
//   "KCLIPCKP" | u32 version | u64 payload bytes | payload | u32 crc32(payload)
// The payload is a length-prefixed JSON header followed by tensor snapshots
// (student, teacher, first moments, second moments) in store order.

#ifndef KCLIP_TRAIN_CHECKPOINT_HPP_
#define KCLIP_TRAIN_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kclip/nn/parameter.hpp"
#include "kclip/train/config.hpp"

namespace kclip::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, nn::Tensor<double>>>;

struct Checkpoint {
  RunConfig config;
  std::vector<std::string> vocabulary;  // one token per id
  std::size_t relations = 0;
  std::uint64_t step = 0;
  std::uint64_t optimizer_steps = 0;
  std::string rng;  // textual engine state
  NamedTensors student;
  NamedTensors teacher;  // empty without distillation
  NamedTensors first_moment;
  NamedTensors second_moment;

  bool operator==(const Checkpoint&) const = default;
};

/// Throws DataError on I/O failure.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws DataError on bad magic, version mismatch, truncation or checksum
/// failure; nothing is returned in those cases.
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <typename Real>
NamedTensors export_values(const nn::ParameterStore<Real>& store);
/// Throws DataError when names or shapes differ.
template <typename Real>
void import_values(const NamedTensors& values, nn::ParameterStore<Real>& store);

/// crc32 over the raw parameter bytes, in store order.
template <typename Real>
std::uint32_t parameter_digest(const nn::ParameterStore<Real>& store);

}  // namespace kclip::train

#endif  // KCLIP_TRAIN_CHECKPOINT_HPP_
