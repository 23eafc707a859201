#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "filmgrade/error.hpp"
#include "filmgrade/image.hpp"

namespace filmgrade {

struct LoadedPng {
  ImagePlane image;
  unsigned bit_depth = 8;
  std::vector<std::string> warnings;
};

namespace detail {

struct PngMessage {
  char text[256] = {};
};

inline void png_on_error(png_structp png, png_const_charp msg) {
  auto* m = static_cast<PngMessage*>(png_get_error_ptr(png));
  if (m) std::snprintf(m->text, sizeof(m->text), "%s", msg);
  png_longjmp(png, 1);
}

inline void png_on_warning(png_structp, png_const_charp) {}

struct FileCloser {
  FILE* fp;
  ~FileCloser() {
    if (fp) std::fclose(fp);
  }
};

}  // namespace detail

// Reads an 8- or 16-bit grayscale or RGB PNG. Samples are divided by
// 2^depth - 1. Alpha is dropped and reported in `warnings`. Palette and
// interlaced files are rejected.
inline LoadedPng read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open '" + path + "'");
  detail::FileCloser closer{fp};

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("'" + path + "' is not a PNG file");
  }

  LoadedPng result;
  std::vector<unsigned char> raw;
  std::vector<png_bytep> rows;
  detail::PngMessage message;

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, detail::png_on_error,
                                           detail::png_on_warning);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png_create_info_struct failed");
  }
  auto fail = [&](const std::string& why) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("'" + path + "': " + why);
  };

  if (setjmp(png_jmpbuf(png))) {
    fail(std::string("libpng: ") + message.text);
  }

  png_init_io(png, fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_uint_32 width = 0, height = 0;
  int depth = 0, color_type = 0, interlace = 0;
  png_get_IHDR(png, info, &width, &height, &depth, &color_type, &interlace, nullptr, nullptr);

  if (interlace != PNG_INTERLACE_NONE) fail("interlaced PNG is not supported");
  if (color_type & PNG_COLOR_MASK_PALETTE) fail("palette PNG is not supported");
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) {
    png_set_strip_alpha(png);
    result.warnings.push_back("alpha channel dropped from '" + path + "'");
  }
  png_read_update_info(png, info);

  const unsigned out_depth = depth == 16 ? 16 : 8;
  const std::size_t channels = (color_type & PNG_COLOR_MASK_COLOR) ? 3 : 1;
  const std::size_t bytes = out_depth / 8;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != width * channels * bytes) fail("unexpected row layout");

  raw.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const double scale = 1.0 / ((1u << out_depth) - 1u);
  std::vector<float> data(static_cast<std::size_t>(width) * height * channels);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const unsigned v = out_depth == 16 ? (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
    data[i] = static_cast<float>(v * scale);
  }
  result.image = ImagePlane(height, width, channels, std::move(data));
  result.bit_depth = out_depth;
  return result;
}

inline ImagePlane load_png(const std::string& path) { return read_png(path).image; }

// Value stored for sample v at the given depth: clamp to [0,1], then round
// half up.
inline unsigned quantize_sample(float v, unsigned bit_depth) {
  const double maxv = static_cast<double>((1u << bit_depth) - 1u);
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<unsigned>(std::floor(c * maxv + 0.5));
}

inline void save_png(const ImagePlane& img, const std::string& path, unsigned bit_depth = 8) {
  require_color(img, "save_png");
  if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("save_png: bit depth must be 8 or 16");
  if (img.empty()) throw InvalidArgument("save_png: empty image");

  const std::size_t bytes = bit_depth / 8;
  const std::size_t rowbytes = img.width() * img.channels() * bytes;
  std::vector<unsigned char> raw(rowbytes * img.height());
  auto src = img.samples();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const unsigned q = quantize_sample(src[i], bit_depth);
    if (bit_depth == 16) {
      raw[2 * i] = static_cast<unsigned char>(q >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    } else {
      raw[i] = static_cast<unsigned char>(q);
    }
  }
  std::vector<png_bytep> rows(img.height());
  for (std::size_t y = 0; y < img.height(); ++y) rows[y] = raw.data() + y * rowbytes;

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write '" + path + "'");
  detail::FileCloser closer{fp};
  detail::PngMessage message;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, detail::png_on_error,
                                            detail::png_on_warning);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("'" + path + "': libpng: " + message.text);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
               static_cast<int>(bit_depth), img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace filmgrade
