#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace mvgw {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w, Rgb fill = {});

  Rgb at(std::size_t y, std::size_t x) const
  {
    const auto* p = &pixels[3 * (y * width + x)];
    return {p[0], p[1], p[2]};
  }
  void set(std::size_t y, std::size_t x, Rgb c)
  {
    auto* p = &pixels[3 * (y * width + x)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

GrayImage read_png_gray(const std::filesystem::path& path);
RgbImage read_png_rgb(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const GrayImage& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace mvgw
