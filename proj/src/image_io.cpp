#include "rfusion/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace rfusion {

std::uint8_t linear_to_srgb8(float linear) {
  const float c = std::clamp(linear, 0.0f, 1.0f);
  const float s = c <= 0.0031308f ? 12.92f * c : 1.055f * std::pow(c, 1.0f / 2.4f) - 0.055f;
  return static_cast<std::uint8_t>(std::lround(s * 255.0f));
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

}  // namespace

std::vector<std::uint8_t> encode_png(const RenderTarget& target, const Eigen::Vector3f& background) {
  if (target.width < 1 || target.height < 1) {
    throw std::invalid_argument("encode_png: empty image");
  }
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(target.pixel_count()) * 3);
  for (Eigen::Index i = 0; i < target.pixel_count(); ++i) {
    const Eigen::Vector3f c = target.color.col(i) + (1.0f - target.alpha(i)) * background;
    for (int ch = 0; ch < 3; ++ch) rgb[static_cast<std::size_t>(i) * 3 + ch] = linear_to_srgb8(c[ch]);
  }

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng encoding failed");
  }
  png_set_write_fn(png, &out, append_bytes, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(target.width), static_cast<png_uint_32>(target.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_sRGB(png, info, PNG_sRGB_INTENT_PERCEPTUAL);
  png_write_info(png, info);
  for (int y = 0; y < target.height; ++y) {
    png_write_row(png, rgb.data() + static_cast<std::size_t>(y) * target.width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const RenderTarget& target, const std::filesystem::path& path, const Eigen::Vector3f& background) {
  const auto bytes = encode_png(target, background);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace rfusion
