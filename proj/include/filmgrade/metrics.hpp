#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "filmgrade/color.hpp"
#include "filmgrade/error.hpp"
#include "filmgrade/image.hpp"
#include "filmgrade/loss.hpp"

namespace filmgrade {

// +infinity for identical images.
inline double psnr(const ImagePlane& pred, const ImagePlane& target, double peak = 1.0) {
  if (!(peak > 0.0)) throw InvalidArgument("psnr: peak must be positive");
  const double mse = mse_loss(pred, target);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

struct DeltaEStats {
  double mean = 0.0;
  double p95 = 0.0;
};

// CIE76 colour difference per pixel; mean and nearest-rank 95th percentile.
inline DeltaEStats delta_e(const ImagePlane& pred, const ImagePlane& target) {
  require_same_shape(pred, target, "delta_e");
  require_rgb(pred, "delta_e");
  const std::size_t n = pred.pixel_count();
  if (n == 0) throw InvalidArgument("delta_e: empty image");
  std::vector<double> de(n);
  parallel_for(0, pred.height(), [&](std::size_t y) {
    for (std::size_t x = 0; x < pred.width(); ++x) {
      const float* a = pred.pixel(y, x);
      const float* b = target.pixel(y, x);
      de[y * pred.width() + x] = delta_e76(srgb_to_lab({a[0], a[1], a[2]}), srgb_to_lab({b[0], b[1], b[2]}));
    }
  }, 4);
  DeltaEStats s;
  for (double v : de) s.mean += v;
  s.mean /= static_cast<double>(n);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  std::nth_element(de.begin(), de.begin() + static_cast<std::ptrdiff_t>(rank - 1), de.end());
  s.p95 = de[rank - 1];
  return s;
}

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

inline std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  const int r = static_cast<int>(kSsimWindow / 2);
  for (int i = -r; i <= r; ++i) {
    w[i + r] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i + r];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Mean SSIM over all fully covered 11x11 Gaussian windows (sigma 1.5), per
// channel, averaged over channels.
inline double ssim_windowed(const ImagePlane& pred, const ImagePlane& target, double peak = 1.0) {
  require_same_shape(pred, target, "ssim_windowed");
  if (pred.height() < kSsimWindow || pred.width() < kSsimWindow) {
    throw InvalidArgument("ssim_windowed: image " + pred.shape_string() + " smaller than the 11x11 window");
  }
  const auto k = ssim_constants(peak);
  const auto w = gaussian_window();
  const std::size_t H = pred.height(), W = pred.width(), C = pred.channels();
  const std::size_t oh = H - kSsimWindow + 1, ow = W - kSsimWindow + 1;

  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    // Horizontal pass of x, y, x^2, y^2, xy.
    std::vector<std::array<double, 5>> hz(H * ow);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        std::array<double, 5> acc{};
        for (std::size_t i = 0; i < kSsimWindow; ++i) {
          const double a = pred.at(y, x + i, c);
          const double b = target.at(y, x + i, c);
          acc[0] += w[i] * a;
          acc[1] += w[i] * b;
          acc[2] += w[i] * a * a;
          acc[3] += w[i] * b * b;
          acc[4] += w[i] * a * b;
        }
        hz[y * ow + x] = acc;
      }
    double channel_sum = 0.0;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        std::array<double, 5> m{};
        for (std::size_t i = 0; i < kSsimWindow; ++i)
          for (int q = 0; q < 5; ++q) m[q] += w[i] * hz[(y + i) * ow + x][q];
        ChannelMoments mo{m[0], m[1], m[2] - m[0] * m[0], m[3] - m[1] * m[1], m[4] - m[0] * m[1]};
        channel_sum += ssim_from_moments(mo, k);
      }
    total += channel_sum / static_cast<double>(oh * ow);
  }
  return total / static_cast<double>(C);
}

struct MetricReport {
  double psnr = 0.0;  // +infinity for identical images
  double ssim_global = 0.0;
  double ssim_windowed = 0.0;
  double delta_e_mean = 0.0;
  double delta_e_p95 = 0.0;
};

inline ImagePlane gray_to_rgb(const ImagePlane& img) {
  if (img.channels() == 3) return img;
  require_color(img, "gray_to_rgb");
  return concat_channels({&img, &img, &img});
}

// `peak` is both the PSNR peak and the SSIM dynamic range; images must use
// the matching scale.
inline MetricReport compute_metrics(const ImagePlane& pred, const ImagePlane& target, double peak = 1.0) {
  require_same_shape(pred, target, "compute_metrics");
  require_color(pred, "compute_metrics");
  MetricReport r;
  r.psnr = psnr(pred, target, peak);
  r.ssim_global = ssim(pred, target, peak);
  r.ssim_windowed = ssim_windowed(pred, target, peak);
  const double to_unit = 1.0 / peak;
  const auto de = delta_e(gray_to_rgb(scaled(pred, static_cast<float>(to_unit))),
                          gray_to_rgb(scaled(target, static_cast<float>(to_unit))));
  r.delta_e_mean = de.mean;
  r.delta_e_p95 = de.p95;
  return r;
}

}  // namespace filmgrade
