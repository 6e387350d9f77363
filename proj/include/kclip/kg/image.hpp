// SPDX-License-Identifier: Apache-2.0
//
// Image blobs: height x width x channels of unit-interval floats.
// On disk: little-endian u32 height, width, channels, then float32 pixels
// in row-major (h, w, c) order.

#ifndef KCLIP_KG_IMAGE_HPP_
#define KCLIP_KG_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

namespace kclip::kg {

struct Image {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<float> pixels;

  float at(std::uint32_t y, std::uint32_t x, std::uint32_t c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);

}  // namespace kclip::kg

#endif  // KCLIP_KG_IMAGE_HPP_
