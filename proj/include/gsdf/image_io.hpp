// SPDX-License-Identifier: Apache-2.0
//
// Minimal PNG reading and writing on top of libpng.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace gsdf {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decoded PNG samples, row-major, interleaved channels. 8-bit images keep
/// values in [0, 255], 16-bit images in [0, 65535].
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
  int bit_depth = 0; // 8 or 16
  std::vector<std::uint16_t> samples;

  std::uint16_t at(int u, int v, int c) const {
    return samples[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
};

/// Palette and sub-byte gray images are expanded to 8 bit.
PngImage read_png(const std::filesystem::path& path);

void write_png_gray16(const std::filesystem::path& path, int width, int height,
                      std::span<const std::uint16_t> samples);
void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    std::span<const std::uint8_t> samples);

}  // namespace gsdf
