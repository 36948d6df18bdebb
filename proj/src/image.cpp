#include "mvgwhiten/image.hpp"

#include <png.h>

#include <cstring>
#include <string>

#include "mvgwhiten/errors.hpp"

namespace mvgw {
namespace {

struct PngImage {
  png_image image;
  PngImage()
  {
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
};

std::vector<std::uint8_t> read_as(const std::filesystem::path& path, png_uint_32 format, std::size_t& height,
                                  std::size_t& width)
{
  if (!std::filesystem::exists(path)) throw IoError("file not found: " + path.string());
  PngImage png;
  if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
    throw FormatError("cannot decode PNG " + path.string() + ": " + png.image.message);
  }
  png.image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(png.image));
  if (!png_image_finish_read(&png.image, nullptr, buffer.data(), 0, nullptr)) {
    throw FormatError("cannot decode PNG " + path.string() + ": " + png.image.message);
  }
  height = png.image.height;
  width = png.image.width;
  return buffer;
}

void write_as(const std::filesystem::path& path, png_uint_32 format, std::size_t height, std::size_t width,
              const std::vector<std::uint8_t>& pixels)
{
  PngImage png;
  png.image.width = static_cast<png_uint_32>(width);
  png.image.height = static_cast<png_uint_32>(height);
  png.image.format = format;
  if (!png_image_write_to_file(&png.image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.image.message);
  }
}

}  // namespace

RgbImage::RgbImage(std::size_t h, std::size_t w, Rgb fill) : height(h), width(w), pixels(3 * h * w)
{
  for (std::size_t i = 0; i < h * w; ++i) {
    pixels[3 * i] = fill.r;
    pixels[3 * i + 1] = fill.g;
    pixels[3 * i + 2] = fill.b;
  }
}

GrayImage read_png_gray(const std::filesystem::path& path)
{
  GrayImage out;
  out.pixels = read_as(path, PNG_FORMAT_GRAY, out.height, out.width);
  return out;
}

RgbImage read_png_rgb(const std::filesystem::path& path)
{
  RgbImage out;
  out.pixels = read_as(path, PNG_FORMAT_RGB, out.height, out.width);
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& image)
{
  write_as(path, PNG_FORMAT_GRAY, image.height, image.width, image.pixels);
}

void write_png(const std::filesystem::path& path, const RgbImage& image)
{
  write_as(path, PNG_FORMAT_RGB, image.height, image.width, image.pixels);
}

}  // namespace mvgw
