// SPDX-License-Identifier: Apache-2.0

#include "kclip/kg/image.hpp"

#include <fstream>

#include "kclip/errors.hpp"

namespace kclip::kg {

Image read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image blob " + path.string());
  std::uint32_t header[3] = {0, 0, 0};
  if (!in.read(reinterpret_cast<char*>(header), sizeof header)) {
    throw DataError("truncated image header in " + path.string());
  }
  Image image{header[0], header[1], header[2], {}};
  const std::size_t n = static_cast<std::size_t>(image.height) * image.width * image.channels;
  if (n == 0 || n > (std::size_t{1} << 28)) {
    throw DataError("implausible image geometry in " + path.string());
  }
  image.pixels.resize(n);
  if (!in.read(reinterpret_cast<char*>(image.pixels.data()),
               static_cast<std::streamsize>(n * sizeof(float)))) {
    throw DataError("truncated image payload in " + path.string());
  }
  return image;
}

void write_image(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image blob " + path.string());
  const std::uint32_t header[3] = {image.height, image.width, image.channels};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size() * sizeof(float)));
}

}  // namespace kclip::kg
