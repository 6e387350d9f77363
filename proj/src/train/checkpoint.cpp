// SPDX-License-Identifier: Apache-2.0

#include "kclip/train/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "kclip/errors.hpp"
#include "kclip/nn/snapshot.hpp"

namespace kclip::train {

namespace {

constexpr char kMagic[8] = {'K', 'C', 'L', 'I', 'P', 'C', 'K', 'P'};

std::uint32_t crc(const char* data, std::size_t size) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  while (size > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void write_tensors(std::ostream& out, const NamedTensors& tensors) {
  for (const auto& [name, t] : tensors) nn::write_snapshot(out, t);
}

NamedTensors read_tensors(std::istream& in, const std::vector<std::string>& names) {
  NamedTensors out;
  for (const auto& n : names) out.emplace_back(n, nn::read_snapshot<double>(in));
  return out;
}

std::vector<std::string> names_of(const NamedTensors& t) {
  std::vector<std::string> out;
  for (const auto& [name, value] : t) out.push_back(name);
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json header{{"config", ckpt.config},
                        {"vocabulary", ckpt.vocabulary},
                        {"relations", ckpt.relations},
                        {"step", ckpt.step},
                        {"optimizer_steps", ckpt.optimizer_steps},
                        {"rng", ckpt.rng},
                        {"parameters", names_of(ckpt.student)},
                        {"teacher", !ckpt.teacher.empty()}};
  std::ostringstream payload;
  const std::string text = header.dump();
  const std::uint64_t text_size = text.size();
  payload.write(reinterpret_cast<const char*>(&text_size), sizeof text_size);
  payload << text;
  write_tensors(payload, ckpt.student);
  write_tensors(payload, ckpt.teacher);
  write_tensors(payload, ckpt.first_moment);
  write_tensors(payload, ckpt.second_moment);
  const std::string bytes = payload.str();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  nn::write_u32(out, kCheckpointVersion);
  const std::uint64_t size = bytes.size();
  out.write(reinterpret_cast<const char*>(&size), sizeof size);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  nn::write_u32(out, crc(bytes.data(), bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string where = "checkpoint " + path.string() + ": ";
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(where + "not a checkpoint file");
  }
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  if (!in.read(reinterpret_cast<char*>(&version), sizeof version) ||
      !in.read(reinterpret_cast<char*>(&size), sizeof size)) {
    throw DataError(where + "truncated header");
  }
  if (version != kCheckpointVersion) {
    throw DataError(where + "version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto file_size = std::filesystem::file_size(path);
  if (size > file_size) throw DataError(where + "checksum failure (truncated payload)");
  std::string bytes(size, '\0');
  std::uint32_t stored = 0;
  if (!in.read(bytes.data(), static_cast<std::streamsize>(size)) ||
      !in.read(reinterpret_cast<char*>(&stored), sizeof stored)) {
    throw DataError(where + "checksum failure (truncated payload)");
  }
  if (crc(bytes.data(), bytes.size()) != stored) throw DataError(where + "checksum failure");

  Checkpoint ckpt;
  try {
    std::istringstream payload(bytes);
    std::uint64_t text_size = 0;
    payload.read(reinterpret_cast<char*>(&text_size), sizeof text_size);
    std::string text(text_size, '\0');
    payload.read(text.data(), static_cast<std::streamsize>(text_size));
    const auto header = nlohmann::json::parse(text);
    header.at("config").get_to(ckpt.config);
    header.at("vocabulary").get_to(ckpt.vocabulary);
    header.at("relations").get_to(ckpt.relations);
    header.at("step").get_to(ckpt.step);
    header.at("optimizer_steps").get_to(ckpt.optimizer_steps);
    header.at("rng").get_to(ckpt.rng);
    const auto names = header.at("parameters").get<std::vector<std::string>>();
    ckpt.student = read_tensors(payload, names);
    if (header.at("teacher").get<bool>()) ckpt.teacher = read_tensors(payload, names);
    ckpt.first_moment = read_tensors(payload, names);
    ckpt.second_moment = read_tensors(payload, names);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(where + "malformed payload: " + e.what());
  }
  return ckpt;
}

template <typename Real>
NamedTensors export_values(const nn::ParameterStore<Real>& store) {
  NamedTensors out;
  for (const auto& p : store) out.emplace_back(p.name, p.value.template cast<double>());
  return out;
}

template <typename Real>
void import_values(const NamedTensors& values, nn::ParameterStore<Real>& store) {
  if (values.size() != store.size()) {
    throw DataError("checkpoint holds " + std::to_string(values.size()) + " parameters, model has " +
                    std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& p = store[i];
    if (values[i].first != p.name || values[i].second.shape() != p.value.shape()) {
      throw DataError("checkpoint parameter '" + values[i].first + "' does not match '" + p.name +
                      "'");
    }
    p.value = values[i].second.template cast<Real>();
  }
}

template <typename Real>
std::uint32_t parameter_digest(const nn::ParameterStore<Real>& store) {
  uLong c = crc32(0L, Z_NULL, 0);
  for (const auto& p : store) {
    c = crc32(c, reinterpret_cast<const Bytef*>(p.value.data()),
              static_cast<uInt>(p.value.size() * sizeof(Real)));
  }
  return static_cast<std::uint32_t>(c);
}

template NamedTensors export_values<float>(const nn::ParameterStore<float>&);
template NamedTensors export_values<double>(const nn::ParameterStore<double>&);
template void import_values<float>(const NamedTensors&, nn::ParameterStore<float>&);
template void import_values<double>(const NamedTensors&, nn::ParameterStore<double>&);
template std::uint32_t parameter_digest<float>(const nn::ParameterStore<float>&);
template std::uint32_t parameter_digest<double>(const nn::ParameterStore<double>&);

}  // namespace kclip::train
