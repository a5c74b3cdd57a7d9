#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace deid {

// 8-bit interleaved image, row-major. channels is 1 (gray) or 3 (RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0);

  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t sample_count() const noexcept { return pixel_count() * static_cast<std::size_t>(channels); }

  std::uint8_t at(int x, int y, int c) const noexcept {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int x, int y, int c) noexcept {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const Image& other) const noexcept {
    return width == other.width && height == other.height && channels == other.channels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Throws AuditError(InvalidArgument) when the image violates its invariants.
void validate(const Image& image);

// Decodes a PNG. Grayscale stays 1 channel, color becomes 3 (alpha dropped,
// palettes expanded). 16-bit PNGs are rejected as UnsupportedFormat.
Image decode_png(std::span<const std::uint8_t> bytes);
Image load_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
void save_png(const Image& image, const std::filesystem::path& path);

}  // namespace deid
