// SPDX-License-Identifier: Apache-2.0

#include "kclip/nn/snapshot.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace kclip::nn {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes little-endian");

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("snapshot: truncated");
  return v;
}

template <typename Real>
void write_snapshot(std::ostream& out, const Tensor<Real>& t) {
  write_u32(out, static_cast<std::uint32_t>(t.shape().size()));
  for (auto e : t.shape()) write_u32(out, static_cast<std::uint32_t>(e));
  std::vector<double> payload(t.values().begin(), t.values().end());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
}

template <typename Real>
Tensor<Real> read_snapshot(std::istream& in) {
  const std::uint32_t rank = read_u32(in);
  if (rank > 8) throw std::runtime_error("snapshot: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = read_u32(in);
  std::vector<double> payload(shape_size(shape));
  if (!in.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(payload.size() * sizeof(double)))) {
    throw std::runtime_error("snapshot: truncated payload");
  }
  return Tensor<Real>(std::move(shape), std::vector<Real>(payload.begin(), payload.end()));
}

template void write_snapshot<float>(std::ostream&, const Tensor<float>&);
template void write_snapshot<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_snapshot<float>(std::istream&);
template Tensor<double> read_snapshot<double>(std::istream&);

}  // namespace kclip::nn
