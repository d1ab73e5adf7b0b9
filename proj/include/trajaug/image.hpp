#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace trajaug {

/// 8-bit RGB image, row-major, channel-interleaved.
struct ImageArray {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  ImageArray() = default;
  ImageArray(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * 3, fill) {}

  static constexpr int channels = 3;

  std::uint8_t& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[index(y, x, c)]; }
  bool valid() const {
    return height > 0 && width > 0 &&
           pixels.size() == static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3;
  }
  bool operator==(const ImageArray&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3 +
           static_cast<std::size_t>(c);
  }
};

/// Binary PPM (P6, maxval 255).
ImageArray read_ppm(const std::filesystem::path& path);
void write_ppm(const ImageArray& img, const std::filesystem::path& path);

}  // namespace trajaug
