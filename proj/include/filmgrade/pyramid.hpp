#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "filmgrade/error.hpp"
#include "filmgrade/image.hpp"
#include "filmgrade/parallel.hpp"

namespace filmgrade {

// High-frequency bands L_0 (finest, input resolution) .. L_{n-1} plus the
// low-frequency base at H/2^n x W/2^n.
struct PyramidDecomposition {
  std::vector<ImagePlane> levels;
  ImagePlane base;

  std::size_t depth() const noexcept { return levels.size(); }
};

namespace pyramid_detail {

// Burt-Adelson binomial kernel (1 4 6 4 1) / 16.
inline constexpr std::array<double, 5> kKernel{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// Reflect-101 border: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline std::ptrdiff_t reflect101(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace pyramid_detail

// Blur with the binomial kernel (reflect-101 border) and keep every second
// row and column.
inline ImagePlane pyr_down(const ImagePlane& img) {
  using namespace pyramid_detail;
  if (img.empty()) throw InvalidArgument("pyr_down: empty image");
  if (img.height() % 2 != 0 || img.width() % 2 != 0) {
    throw InvalidArgument("pyr_down: dimensions must be even, got " + img.shape_string());
  }
  const auto H = static_cast<std::ptrdiff_t>(img.height());
  const auto W = static_cast<std::ptrdiff_t>(img.width());
  const std::size_t C = img.channels();
  const std::size_t oh = img.height() / 2;
  const std::size_t ow = img.width() / 2;

  // Horizontal pass at even columns, all rows.
  std::vector<double> tmp(img.height() * ow * C);
  parallel_for(0, img.height(), [&](std::size_t y) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* dst = &tmp[(y * ow + ox) * C];
      for (std::size_t c = 0; c < C; ++c) dst[c] = 0.0;
      for (int k = -2; k <= 2; ++k) {
        const auto sx = reflect101(static_cast<std::ptrdiff_t>(2 * ox) + k, W);
        const float* src = img.pixel(y, static_cast<std::size_t>(sx));
        for (std::size_t c = 0; c < C; ++c) dst[c] += kKernel[k + 2] * src[c];
      }
    }
  }, 8);

  ImagePlane out(oh, ow, C);
  parallel_for(0, oh, [&](std::size_t oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      float* dst = out.pixel(oy, ox);
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = -2; k <= 2; ++k) {
          const auto sy = reflect101(static_cast<std::ptrdiff_t>(2 * oy) + k, H);
          acc += kKernel[k + 2] * tmp[(static_cast<std::size_t>(sy) * ow + ox) * C + c];
        }
        dst[c] = static_cast<float>(acc);
      }
    }
  }, 4);
  return out;
}

// Zero-insertion upsample by two followed by the binomial kernel scaled by 4
// (2 per axis), reflect-101 on the upsampled grid.
inline ImagePlane pyr_up(const ImagePlane& img) {
  using namespace pyramid_detail;
  if (img.empty()) throw InvalidArgument("pyr_up: empty image");
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  const std::size_t C = img.channels();
  const auto H2 = static_cast<std::ptrdiff_t>(2 * h);
  const auto W2 = static_cast<std::ptrdiff_t>(2 * w);

  // Horizontal pass: source rows, doubled columns.
  std::vector<double> tmp(h * 2 * w * C);
  parallel_for(0, h, [&](std::size_t y) {
    for (std::ptrdiff_t X = 0; X < W2; ++X) {
      double* dst = &tmp[(y * 2 * w + static_cast<std::size_t>(X)) * C];
      for (std::size_t c = 0; c < C; ++c) dst[c] = 0.0;
      for (int k = -2; k <= 2; ++k) {
        const auto sx = reflect101(X + k, W2);
        if (sx % 2 != 0) continue;
        const float* src = img.pixel(y, static_cast<std::size_t>(sx / 2));
        for (std::size_t c = 0; c < C; ++c) dst[c] += 2.0 * kKernel[k + 2] * src[c];
      }
    }
  }, 8);

  ImagePlane out(2 * h, 2 * w, C);
  parallel_for(0, static_cast<std::size_t>(H2), [&](std::size_t Yu) {
    const auto Y = static_cast<std::ptrdiff_t>(Yu);
    for (std::size_t X = 0; X < 2 * w; ++X) {
      float* dst = out.pixel(Yu, X);
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = -2; k <= 2; ++k) {
          const auto sy = reflect101(Y + k, H2);
          if (sy % 2 != 0) continue;
          acc += 2.0 * kKernel[k + 2] * tmp[((static_cast<std::size_t>(sy) / 2) * 2 * w + X) * C + c];
        }
        dst[c] = static_cast<float>(acc);
      }
    }
  }, 4);
  return out;
}

// L_i = G_i - pyr_up(G_{i+1}) with G_0 = img and G_{i+1} = pyr_down(G_i).
inline PyramidDecomposition decompose(const ImagePlane& img, std::size_t depth) {
  if (depth == 0) throw InvalidArgument("decompose: depth must be at least 1");
  const std::size_t m = std::size_t{1} << depth;
  if (img.empty() || img.height() % m != 0 || img.width() % m != 0) {
    throw InvalidArgument("decompose: " + img.shape_string() + " is not divisible by 2^" +
                          std::to_string(depth) + " = " + std::to_string(m));
  }
  PyramidDecomposition pyr;
  pyr.levels.reserve(depth);
  ImagePlane current = img;
  for (std::size_t i = 0; i < depth; ++i) {
    ImagePlane down = pyr_down(current);
    pyr.levels.push_back(subtract(current, pyr_up(down)));
    current = std::move(down);
  }
  pyr.base = std::move(current);
  return pyr;
}

// Folds G_i = L_i + pyr_up(G_{i+1}) from the base upward.
inline ImagePlane reconstruct(const PyramidDecomposition& pyr) {
  if (pyr.levels.empty()) throw InvalidArgument("reconstruct: pyramid has no levels");
  ImagePlane current = pyr.base;
  for (std::size_t i = pyr.levels.size(); i-- > 0;) {
    const ImagePlane& band = pyr.levels[i];
    if (band.height() != 2 * current.height() || band.width() != 2 * current.width() ||
        band.channels() != current.channels()) {
      throw InvalidArgument("reconstruct: level " + std::to_string(i) + " is " + band.shape_string() +
                            " but the coarser level is " + current.shape_string());
    }
    current = add(band, pyr_up(current));
  }
  return current;
}

}  // namespace filmgrade
