#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "filmgrade/error.hpp"
#include "filmgrade/image.hpp"

namespace filmgrade {

inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kSsimLossWeight = 0.4;

// How the SSIM term enters the total loss.
//   Complement: mse + 0.4 * (1 - ssim)   (default; minimising raises SSIM)
//   Literal:    mse + 0.4 * ssim         (as printed; kept for comparison)
enum class SsimTerm { Complement, Literal };

struct LossReport {
  double mse = 0.0;
  double ssim = 1.0;
  double total = 0.0;
  std::size_t n_pixels = 0;
};

struct SsimConstants {
  double c1;
  double c2;
};

inline SsimConstants ssim_constants(double dynamic_range) {
  if (!(dynamic_range > 0.0)) throw InvalidArgument("ssim: dynamic range must be positive");
  return {(kSsimK1 * dynamic_range) * (kSsimK1 * dynamic_range), (kSsimK2 * dynamic_range) * (kSsimK2 * dynamic_range)};
}

// Whole-image statistics of one channel: means, population variances and
// covariance (1/N normalisation).
struct ChannelMoments {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double var_x = 0.0;
  double var_y = 0.0;
  double cov = 0.0;
};

inline ChannelMoments channel_moments(std::span<const double> x, std::span<const double> y, std::size_t channels,
                                      std::size_t c) {
  const std::size_t n = x.size() / channels;
  ChannelMoments m;
  for (std::size_t p = 0; p < n; ++p) {
    m.mean_x += x[p * channels + c];
    m.mean_y += y[p * channels + c];
  }
  m.mean_x /= static_cast<double>(n);
  m.mean_y /= static_cast<double>(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double dx = x[p * channels + c] - m.mean_x;
    const double dy = y[p * channels + c] - m.mean_y;
    m.var_x += dx * dx;
    m.var_y += dy * dy;
    m.cov += dx * dy;
  }
  m.var_x /= static_cast<double>(n);
  m.var_y /= static_cast<double>(n);
  m.cov /= static_cast<double>(n);
  return m;
}

inline double ssim_from_moments(const ChannelMoments& m, const SsimConstants& k) {
  const double a = 2.0 * m.mean_x * m.mean_y + k.c1;
  const double b = 2.0 * m.cov + k.c2;
  const double c = m.mean_x * m.mean_x + m.mean_y * m.mean_y + k.c1;
  const double d = m.var_x + m.var_y + k.c2;
  return (a * b) / (c * d);
}

struct LossWithGradient {
  LossReport report;
  std::vector<double> dpred;  // d total / d pred, same layout as pred
};

// MSE, global SSIM (per channel, averaged) and their combination over
// interleaved sample buffers. With `want_gradient`, also returns the
// derivative of the total with respect to every predicted sample.
inline LossWithGradient loss_and_gradient(std::span<const double> pred, std::span<const double> target,
                                          std::size_t channels, SsimTerm term = SsimTerm::Complement,
                                          double dynamic_range = 1.0, bool want_gradient = true) {
  if (pred.size() != target.size() || channels == 0 || pred.size() % channels != 0 || pred.empty()) {
    throw InvalidArgument("loss: prediction and target sizes differ");
  }
  const auto k = ssim_constants(dynamic_range);
  const std::size_t n_samples = pred.size();
  const std::size_t n_pix = n_samples / channels;

  LossWithGradient out;
  double sq = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double d = pred[i] - target[i];
    sq += d * d;
  }
  out.report.mse = sq / static_cast<double>(n_samples);
  out.report.n_pixels = n_pix;

  std::vector<ChannelMoments> moments(channels);
  double ssim_sum = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    moments[c] = channel_moments(pred, target, channels, c);
    ssim_sum += ssim_from_moments(moments[c], k);
  }
  out.report.ssim = ssim_sum / static_cast<double>(channels);
  const double sign = term == SsimTerm::Complement ? -1.0 : 1.0;
  out.report.total = out.report.mse + kSsimLossWeight * (term == SsimTerm::Complement ? 1.0 - out.report.ssim
                                                                                       : out.report.ssim);
  if (!want_gradient) return out;

  out.dpred.resize(n_samples);
  const double inv_samples = 1.0 / static_cast<double>(n_samples);
  const double inv_pix = 1.0 / static_cast<double>(n_pix);
  const double ssim_scale = sign * kSsimLossWeight / static_cast<double>(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const auto& m = moments[c];
    const double A = 2.0 * m.mean_x * m.mean_y + k.c1;
    const double B = 2.0 * m.cov + k.c2;
    const double C = m.mean_x * m.mean_x + m.mean_y * m.mean_y + k.c1;
    const double D = m.var_x + m.var_y + k.c2;
    const double CD = C * D;
    const double S = (A * B) / CD;
    for (std::size_t p = 0; p < n_pix; ++p) {
      const std::size_t i = p * channels + c;
      // Partial derivatives of the four factors with respect to x_p.
      const double dA = 2.0 * m.mean_y * inv_pix;
      const double dB = 2.0 * (target[i] - m.mean_y) * inv_pix;
      const double dC = 2.0 * m.mean_x * inv_pix;
      const double dD = 2.0 * (pred[i] - m.mean_x) * inv_pix;
      const double dS = (dA * B + A * dB) / CD - S * (dC * D + C * dD) / CD;
      out.dpred[i] = 2.0 * (pred[i] - target[i]) * inv_samples + ssim_scale * dS;
    }
  }
  return out;
}

inline std::vector<double> to_double(const ImagePlane& img) {
  return std::vector<double>(img.samples().begin(), img.samples().end());
}

inline double mse_loss(const ImagePlane& pred, const ImagePlane& target) {
  require_same_shape(pred, target, "mse_loss");
  if (pred.empty()) throw InvalidArgument("mse_loss: empty image");
  double sq = 0.0;
  auto a = pred.samples();
  auto b = target.samples();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sq += d * d;
  }
  return sq / static_cast<double>(a.size());
}

// Global-statistics SSIM: one window covering the whole image, per channel,
// averaged over channels.
inline double ssim(const ImagePlane& pred, const ImagePlane& target, double dynamic_range = 1.0) {
  require_same_shape(pred, target, "ssim");
  if (pred.empty()) throw InvalidArgument("ssim: empty image");
  const auto k = ssim_constants(dynamic_range);
  const auto x = to_double(pred);
  const auto y = to_double(target);
  double sum = 0.0;
  for (std::size_t c = 0; c < pred.channels(); ++c) sum += ssim_from_moments(channel_moments(x, y, pred.channels(), c), k);
  return sum / static_cast<double>(pred.channels());
}

inline LossReport total_loss(const ImagePlane& pred, const ImagePlane& target, SsimTerm term = SsimTerm::Complement,
                             double dynamic_range = 1.0) {
  require_same_shape(pred, target, "total_loss");
  if (pred.empty()) throw InvalidArgument("total_loss: empty image");
  return loss_and_gradient(to_double(pred), to_double(target), pred.channels(), term, dynamic_range, false).report;
}

}  // namespace filmgrade
