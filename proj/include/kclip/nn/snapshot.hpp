// SPDX-License-Identifier: Apache-2.0
//
// Tensor snapshot format: little-endian u32 rank, rank x u32 extents,
// then float64 payload in row-major order (exact for both precisions).

#ifndef KCLIP_NN_SNAPSHOT_HPP_
#define KCLIP_NN_SNAPSHOT_HPP_

#include <cstdint>
#include <istream>
#include <ostream>

#include "kclip/nn/tensor.hpp"

namespace kclip::nn {

void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in);

template <typename Real>
void write_snapshot(std::ostream& out, const Tensor<Real>& t);

/// Throws std::runtime_error on a short read.
template <typename Real>
Tensor<Real> read_snapshot(std::istream& in);

}  // namespace kclip::nn

#endif  // KCLIP_NN_SNAPSHOT_HPP_
