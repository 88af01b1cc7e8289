#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "pvfault/tensor.hpp"

namespace pvfault {

/// 8-bit interleaved RGB image, row-major.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  static constexpr std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  ImageBuffer() = default;
  ImageBuffer(std::size_t width, std::size_t height, std::uint8_t fill = 0);

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  void set_gray(std::size_t x, std::size_t y, std::uint8_t v);

  bool operator==(const ImageBuffer&) const = default;
};

/// True for .png/.jpg/.jpeg (case-insensitive).
bool is_supported_image(const std::filesystem::path& path);

/// Decodes PNG or JPEG into RGB; gray and alpha inputs are converted.
ImageBuffer read_image(const std::filesystem::path& path);
void write_png(const ImageBuffer& image, const std::filesystem::path& path);

/// Bilinear resize (pixel-center aligned); identity when the size matches.
ImageBuffer resize_bilinear(const ImageBuffer& image, std::size_t width, std::size_t height);

/// Pixel scaling applied before the network: unit is v/255 in [0, 1];
/// centered is v/255 - 0.5 in [-0.5, 0.5].
enum class Normalization { unit, centered };

std::string_view to_string(Normalization n);
Normalization parse_normalization(std::string_view text);

/// 3 x H x W float tensor.
Tensor to_tensor(const ImageBuffer& image, Normalization n);

}  // namespace pvfault
