#include "image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace diffsketch::image_io {

namespace {

struct File {
  std::FILE* f;
  ~File() {
    if (f) std::fclose(f);
  }
};

// Decodes to 8-bit RGB rows.
Tensor32 decode(const std::filesystem::path& path) {
  File file{std::fopen(path.c_str(), "rb")};
  if (!file.f) throw InputError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.f) != 8 || png_sig_cmp(sig, 0, 8)) throw InputError(path.string() + " is not a PNG");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw InputError("libpng initialisation failed");
  }
  std::vector<unsigned char> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("corrupt PNG " + path.string());
  }
  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != w * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("unsupported PNG layout in " + path.string());
  }
  buffer.resize(static_cast<std::size_t>(w) * h * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor32 t({static_cast<int>(h), static_cast<int>(w), 3});
  for (std::size_t i = 0; i < buffer.size(); ++i) t.raw()[i] = static_cast<float>(buffer[i] / 255.0);
  return t;
}

}  // namespace

store::Image read_png_rgb(const std::filesystem::path& path) {
  store::Image img{decode(path)};
  img.validate();
  return img;
}

store::Sketch read_png_gray(const std::filesystem::path& path) {
  const Tensor32 rgb = decode(path);
  const int h = rgb.dim(0), w = rgb.dim(1);
  store::Sketch s{Tensor32({h, w, 1})};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float r = rgb.at(y, x, 0), g = rgb.at(y, x, 1), b = rgb.at(y, x, 2);
      // Exact for gray PNGs, where r == g == b.
      s.pixels.at(y, x, 0) = (r == g && g == b) ? r : 0.299f * r + 0.587f * g + 0.114f * b;
    }
  s.validate();
  return s;
}

void write_png(const std::filesystem::path& path, const Tensor32& hwc) {
  if (hwc.rank() != 3 || (hwc.dim(2) != 1 && hwc.dim(2) != 3)) throw InputError("write_png: expected H x W x {1,3}");
  if (!hwc.all_finite()) throw NumericError("write_png: non-finite pixel");
  const int h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
  std::vector<unsigned char> buffer(hwc.size());
  for (std::size_t i = 0; i < buffer.size(); ++i)
    buffer[i] = static_cast<unsigned char>(std::lround(std::clamp(hwc.raw()[i], 0.0f, 1.0f) * 255.0f));
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  File file{std::fopen(path.c_str(), "wb")};
  if (!file.f) throw InputError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw InputError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(h);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, w, h, 8, c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * w * c;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace diffsketch::image_io
