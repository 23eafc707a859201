#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "filmgrade/error.hpp"
#include "filmgrade/image.hpp"
#include "filmgrade/loss.hpp"
#include "filmgrade/lut.hpp"
#include "filmgrade/metrics.hpp"
#include "filmgrade/parallel.hpp"
#include "filmgrade/random.hpp"

namespace filmgrade {

struct GradientOptions {
  SsimTerm term = SsimTerm::Complement;
  double smoothness_weight = 0.0;
  double dynamic_range = 1.0;
};

struct LutGradient {
  LossReport report;
  double smoothness = 0.0;            // regulariser value (already weighted)
  double objective = 0.0;             // report.total + smoothness
  std::vector<double> lattice;        // d objective / d lattice, lattice layout
};

// Mean over adjacent lattice entries (all axes and channels) of squared
// differences, times `weight`, so the weight does not scale with bins.
// Adds its gradient into `grad` when non-null.
template <class Real>
double smoothness_penalty(const BasicLut3D<Real>& lut, double weight, std::vector<double>* grad = nullptr) {
  if (weight == 0.0) return 0.0;
  const std::size_t n = lut.bins();
  const auto v = lut.values();
  weight /= static_cast<double>(9 * n * n * (n - 1));  // 3 axes x n^2 (n-1) pairs x 3 channels
  double sum = 0.0;
  auto pair = [&](std::size_t a, std::size_t b) {
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(v[a * 3 + c]) - static_cast<double>(v[b * 3 + c]);
      sum += d * d;
      if (grad) {
        (*grad)[a * 3 + c] += 2.0 * weight * d;
        (*grad)[b * 3 + c] -= 2.0 * weight * d;
      }
    }
  };
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t g = 0; g < n; ++g)
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t here = lut.node(r, g, b);
        if (r + 1 < n) pair(here, lut.node(r + 1, g, b));
        if (g + 1 < n) pair(here, lut.node(r, g + 1, b));
        if (b + 1 < n) pair(here, lut.node(r, g, b + 1));
      }
  return weight * sum;
}

// Input-side cache for one training pair: the trilinear stencil of every
// pixel (fixed, since inputs never change) and the target samples.
struct PairCache {
  std::vector<TrilinearStencil> stencils;
  std::vector<double> target;
};

inline PairCache make_pair_cache(std::size_t bins, const ImagePlane& input, const ImagePlane& target) {
  require_rgb(input, "fit");
  require_same_shape(input, target, "fit");
  PairCache cache;
  cache.stencils.resize(input.pixel_count());
  parallel_for(0, input.height(), [&](std::size_t y) {
    for (std::size_t x = 0; x < input.width(); ++x) {
      const float* p = input.pixel(y, x);
      cache.stencils[y * input.width() + x] = trilinear_stencil(bins, p[0], p[1], p[2]);
    }
  }, 4);
  cache.target = to_double(target);
  return cache;
}

template <class Real>
std::vector<double> predict(const BasicLut3D<Real>& lut, const PairCache& cache) {
  std::vector<double> pred(cache.stencils.size() * 3);
  parallel_for(0, cache.stencils.size(), [&](std::size_t p) {
    const auto v = blend(lut, cache.stencils[p]);
    pred[p * 3] = v[0];
    pred[p * 3 + 1] = v[1];
    pred[p * 3 + 2] = v[2];
  }, 1024);
  return pred;
}

// Loss of one pair and, when `grad` is non-null, `scale` times its lattice
// gradient accumulated into `grad`. Pixels are scattered in raster order so
// the result does not depend on the thread count.
template <class Real>
LossReport pair_loss(const BasicLut3D<Real>& lut, const PairCache& cache, const GradientOptions& opt,
                     std::vector<double>* grad, double scale = 1.0) {
  const auto pred = predict(lut, cache);
  const auto lg = loss_and_gradient(pred, cache.target, 3, opt.term, opt.dynamic_range, grad != nullptr);
  if (grad) {
    for (std::size_t p = 0; p < cache.stencils.size(); ++p) {
      const auto& s = cache.stencils[p];
      for (int n = 0; n < 8; ++n) {
        const std::size_t base = std::size_t{s.node[n]} * 3;
        const double w = s.weight[n] * scale;
        for (int c = 0; c < 3; ++c) (*grad)[base + c] += w * lg.dpred[p * 3 + c];
      }
    }
  }
  return lg.report;
}

// Analytic gradient of total_loss(apply_lut(lut, img), target) (plus the
// optional smoothness term) with respect to every lattice value.
template <class Real>
LutGradient lut_gradient(const BasicLut3D<Real>& lut, const ImagePlane& img, const ImagePlane& target,
                         const GradientOptions& opt = {}) {
  const PairCache cache = make_pair_cache(lut.bins(), img, target);
  LutGradient g;
  g.lattice.assign(lut.values().size(), 0.0);
  g.report = pair_loss(lut, cache, opt, &g.lattice);
  g.smoothness = smoothness_penalty(lut, opt.smoothness_weight, &g.lattice);
  g.objective = g.report.total + g.smoothness;
  return g;
}

template <class Real>
double lut_objective(const BasicLut3D<Real>& lut, const ImagePlane& img, const ImagePlane& target,
                     const GradientOptions& opt = {}) {
  const PairCache cache = make_pair_cache(lut.bins(), img, target);
  return pair_loss(lut, cache, opt, nullptr).total + smoothness_penalty(lut, opt.smoothness_weight);
}

struct WeightGradient {
  LossReport report;
  std::vector<double> weights;  // d total / d w_k
};

// Gradient of total_loss(apply_lut(combine_luts(basis, w), img), target)
// with respect to the blend weights w.
template <class Real>
WeightGradient combine_weight_gradient(const std::vector<BasicLut3D<Real>>& basis, const std::vector<double>& w,
                                       const ImagePlane& img, const ImagePlane& target,
                                       const GradientOptions& opt = {}) {
  if (basis.empty() || basis.size() != w.size()) throw InvalidArgument("combine_weight_gradient: size mismatch");
  const PairCache cache = make_pair_cache(basis.front().bins(), img, target);
  std::vector<std::vector<double>> per_basis;
  for (const auto& b : basis) {
    if (b.bins() != basis.front().bins()) throw InvalidArgument("combine_weight_gradient: bin mismatch");
    per_basis.push_back(predict(b, cache));
  }
  std::vector<double> pred(cache.target.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t k = 0; k < basis.size(); ++k) pred[i] += w[k] * per_basis[k][i];
  const auto lg = loss_and_gradient(pred, cache.target, 3, opt.term, opt.dynamic_range, true);
  WeightGradient out{lg.report, std::vector<double>(basis.size(), 0.0)};
  for (std::size_t k = 0; k < basis.size(); ++k)
    for (std::size_t i = 0; i < pred.size(); ++i) out.weights[k] += lg.dpred[i] * per_basis[k][i];
  return out;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

enum class Optimizer { Adam, GradientDescent };

// FullBatch: one update per iteration on the loss averaged over all training
// pairs. Shuffled: per iteration, a seeded permutation of the training
// pairs with one update per pair.
enum class BatchMode { FullBatch, Shuffled };

struct FitConfig {
  std::size_t iterations = 2000;
  double step_size = 1e-4;
  std::size_t bins = 33;
  double smoothness_weight = 1e-4;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.0;
  Optimizer optimizer = Optimizer::Adam;
  BatchMode mode = BatchMode::FullBatch;
  SsimTerm term = SsimTerm::Complement;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (iterations < 1) throw InvalidArgument("fit: iterations must be at least 1");
    if (!(step_size > 0.0)) throw InvalidArgument("fit: step size must be positive");
    if (bins < 2) throw InvalidArgument("fit: bins must be at least 2");
    if (!(smoothness_weight >= 0.0)) throw InvalidArgument("fit: smoothness weight must be non-negative");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
      throw InvalidArgument("fit: holdout fraction must lie in [0, 1)");
    }
  }
};

// Training loss is measured at the start of each iteration, before its
// update. holdout_psnr is NaN when there is no holdout set.
struct TraceRow {
  std::size_t iteration = 0;
  double mse = 0.0;
  double ssim = 0.0;
  double total = 0.0;
  double holdout_psnr = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
  Lut3D lut;
  std::vector<TraceRow> trace;
  std::vector<std::size_t> train_pairs;    // indices into the caller's list
  std::vector<std::size_t> holdout_pairs;
  unsigned threads = 1;
};

class FitAborted : public NumericError {
 public:
  FitAborted(const std::string& what, std::vector<TraceRow> trace)
      : NumericError(what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const noexcept { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

using ImagePair = std::pair<ImagePlane, ImagePlane>;

namespace fit_detail {

inline std::uint64_t content_hash(const ImagePair& p) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const ImagePlane& img) {
    for (float v : img.samples()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      for (int i = 0; i < 4; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
  };
  mix(p.first);
  mix(p.second);
  return h;
}

// Order of pairs by content, so fitting does not depend on the order the
// caller listed them in.
inline std::vector<std::size_t> canonical_order(const std::vector<ImagePair>& pairs) {
  std::vector<std::uint64_t> hash(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) hash[i] = content_hash(pairs[i]);
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (hash[a] != hash[b]) return hash[a] < hash[b];
    const auto& x = pairs[a];
    const auto& y = pairs[b];
    if (x.first.shape_string() != y.first.shape_string()) return x.first.shape_string() < y.first.shape_string();
    if (x.first.vector() != y.first.vector()) return x.first.vector() < y.first.vector();
    return x.second.vector() < y.second.vector();
  });
  return idx;
}

template <class T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace fit_detail

// Fits a single 3D LUT to (input, target) pairs, starting from the identity.
inline FitResult fit_lut(const std::vector<ImagePair>& pairs, const FitConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw InvalidArgument("fit_lut: no training pairs");
  for (const auto& [in, tg] : pairs) {
    require_rgb(in, "fit_lut");
    require_same_shape(in, tg, "fit_lut");
    if (in.empty()) throw InvalidArgument("fit_lut: empty image");
  }

  FitResult result;
  result.threads = thread_count();
  SplitMix64 rng(cfg.seed);
  std::vector<std::size_t> order = fit_detail::canonical_order(pairs);

  std::size_t n_hold = 0;
  if (cfg.holdout_fraction > 0.0 && pairs.size() > 1) {
    n_hold = static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(pairs.size())));
    n_hold = std::clamp<std::size_t>(n_hold, 1, pairs.size() - 1);
    std::vector<std::size_t> shuffled = order;
    fit_detail::shuffle(shuffled, rng);
    std::vector<bool> hold(pairs.size(), false);
    for (std::size_t i = 0; i < n_hold; ++i) hold[shuffled[i]] = true;
    for (std::size_t i : order) (hold[i] ? result.holdout_pairs : result.train_pairs).push_back(i);
  } else {
    result.train_pairs = order;
  }

  std::vector<PairCache> train;
  for (std::size_t i : result.train_pairs) train.push_back(make_pair_cache(cfg.bins, pairs[i].first, pairs[i].second));
  std::vector<PairCache> holdout;
  for (std::size_t i : result.holdout_pairs)
    holdout.push_back(make_pair_cache(cfg.bins, pairs[i].first, pairs[i].second));

  BasicLut3D<double> lut = identity_lut<double>(cfg.bins);
  const std::size_t n_params = lut.values().size();
  std::vector<double> grad(n_params), m1(n_params, 0.0), m2(n_params, 0.0);
  std::size_t step = 0;
  const GradientOptions gopt{cfg.term, 0.0, 1.0};

  auto update = [&] {
    smoothness_penalty(lut, cfg.smoothness_weight, &grad);
    ++step;
    auto theta = lut.values();
    if (cfg.optimizer == Optimizer::GradientDescent) {
      for (std::size_t i = 0; i < n_params; ++i) theta[i] -= cfg.step_size * grad[i];
      return;
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < n_params; ++i) {
      m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
      m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      theta[i] -= cfg.step_size * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.epsilon);
    }
  };

  auto holdout_psnr = [&] {
    if (holdout.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sq = 0.0;
    std::size_t n = 0;
    for (const auto& h : holdout) {
      const auto pred = predict(lut, h);
      for (std::size_t i = 0; i < pred.size(); ++i) sq += (pred[i] - h.target[i]) * (pred[i] - h.target[i]);
      n += pred.size();
    }
    const double mse = sq / static_cast<double>(n);
    return mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
  };

  const double inv_pairs = 1.0 / static_cast<double>(train.size());
  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), 0);

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    TraceRow row;
    row.iteration = it;
    row.holdout_psnr = holdout_psnr();
    if (cfg.mode == BatchMode::FullBatch) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (const auto& pc : train) {
        const auto rep = pair_loss(lut, pc, gopt, &grad, inv_pairs);
        row.mse += rep.mse * inv_pairs;
        row.ssim += rep.ssim * inv_pairs;
        row.total += rep.total * inv_pairs;
      }
      if (!std::isfinite(row.total)) {
        result.trace.push_back(row);
        throw FitAborted("fit_lut: non-finite loss at iteration " + std::to_string(it), result.trace);
      }
      update();
    } else {
      fit_detail::shuffle(perm, rng);
      for (std::size_t k : perm) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const auto rep = pair_loss(lut, train[k], gopt, &grad);
        row.mse += rep.mse * inv_pairs;
        row.ssim += rep.ssim * inv_pairs;
        row.total += rep.total * inv_pairs;
        if (!std::isfinite(rep.total)) {
          result.trace.push_back(row);
          throw FitAborted("fit_lut: non-finite loss at iteration " + std::to_string(it), result.trace);
        }
        update();
      }
    }
    result.trace.push_back(row);
  }
  if (!lut.all_finite()) throw FitAborted("fit_lut: lattice diverged", result.trace);
  result.lut = lut.cast<float>();
  return result;
}

// Fits static blend weights for a fixed basis with Adam, starting from
// `initial` (the adjuster network itself is not trained).
inline std::vector<double> fit_combine_weights(const std::vector<Lut3D>& basis, const std::vector<ImagePair>& pairs,
                                               std::vector<double> initial, const FitConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw InvalidArgument("fit_combine_weights: no pairs");
  std::vector<double> w = std::move(initial);
  std::vector<double> m1(w.size(), 0.0), m2(w.size(), 0.0);
  const auto order = fit_detail::canonical_order(pairs);
  const GradientOptions gopt{cfg.term, 0.0, 1.0};
  for (std::size_t step = 1; step <= cfg.iterations; ++step) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t i : order) {
      const auto wg = combine_weight_gradient(basis, w, pairs[i].first, pairs[i].second, gopt);
      for (std::size_t k = 0; k < w.size(); ++k) g[k] += wg.weights[k] / static_cast<double>(pairs.size());
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < w.size(); ++k) {
      m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g[k];
      m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      w[k] -= cfg.step_size * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + cfg.epsilon);
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Finite-difference verification
// ---------------------------------------------------------------------------

inline constexpr double kGradCheckTolerance = 1e-3;
inline constexpr double kGradCheckStep = 1e-4;

struct GradCheckReport {
  std::string target;
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor); the floor keeps entries whose true
// derivative is zero from dividing rounding noise by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

// Compares lut_gradient against central differences on every lattice value.
inline GradCheckReport grad_check_lut(const BasicLut3D<double>& lut, const ImagePlane& img, const ImagePlane& target,
                                      const GradientOptions& opt = {}) {
  const auto analytic = lut_gradient(lut, img, target, opt).lattice;
  const PairCache cache = make_pair_cache(lut.bins(), img, target);
  auto objective = [&](const BasicLut3D<double>& l) {
    return pair_loss(l, cache, opt, nullptr).total + smoothness_penalty(l, opt.smoothness_weight);
  };
  GradCheckReport rep{"lut_lattice"};
  BasicLut3D<double> probe = lut;
  for (std::size_t i = 0; i < probe.values().size(); ++i) {
    const double orig = probe.values()[i];
    probe.values()[i] = orig + kGradCheckStep;
    const double up = objective(probe);
    probe.values()[i] = orig - kGradCheckStep;
    const double down = objective(probe);
    probe.values()[i] = orig;
    const double numeric = (up - down) / (2.0 * kGradCheckStep);
    rep.max_relative_error = std::max(rep.max_relative_error, relative_error(analytic[i], numeric));
    ++rep.checked;
  }
  rep.passed = rep.max_relative_error < kGradCheckTolerance;
  return rep;
}

inline GradCheckReport grad_check_weights(const std::vector<BasicLut3D<double>>& basis, const std::vector<double>& w,
                                          const ImagePlane& img, const ImagePlane& target,
                                          const GradientOptions& opt = {}) {
  const auto analytic = combine_weight_gradient(basis, w, img, target, opt).weights;
  GradCheckReport rep{"combine_weights"};
  std::vector<double> probe = w;
  for (std::size_t k = 0; k < w.size(); ++k) {
    probe[k] = w[k] + kGradCheckStep;
    const double up = combine_weight_gradient(basis, probe, img, target, opt).report.total;
    probe[k] = w[k] - kGradCheckStep;
    const double down = combine_weight_gradient(basis, probe, img, target, opt).report.total;
    probe[k] = w[k];
    const double numeric = (up - down) / (2.0 * kGradCheckStep);
    rep.max_relative_error = std::max(rep.max_relative_error, relative_error(analytic[k], numeric));
    ++rep.checked;
  }
  rep.passed = rep.max_relative_error < kGradCheckTolerance;
  return rep;
}

struct GradCheckOptions {
  std::size_t bins = 5;
  std::size_t height = 4;
  std::size_t width = 4;
  double smoothness_weight = 0.0;
  SsimTerm term = SsimTerm::Complement;
};

inline ImagePlane random_image(std::size_t h, std::size_t w, std::size_t c, SplitMix64& rng, double lo = 0.0,
                               double hi = 1.0) {
  ImagePlane img(h, w, c);
  for (float& v : img.samples()) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

// Seeded gradient check of a named differentiable target:
//   "lut_lattice"     - lattice of a perturbed identity LUT
//   "combine_weights" - blend weights over three random basis LUTs
inline GradCheckReport grad_check(const std::string& target, std::uint64_t seed, const GradCheckOptions& opt = {}) {
  SplitMix64 rng(seed);
  const GradientOptions gopt{opt.term, opt.smoothness_weight, 1.0};
  const ImagePlane img = random_image(opt.height, opt.width, 3, rng);
  const ImagePlane tgt = random_image(opt.height, opt.width, 3, rng);
  auto perturbed_identity = [&] {
    auto lut = identity_lut<double>(opt.bins);
    for (double& v : lut.values()) v += rng.uniform(-0.1, 0.1);
    return lut;
  };
  if (target == "lut_lattice") return grad_check_lut(perturbed_identity(), img, tgt, gopt);
  if (target == "combine_weights") {
    std::vector<BasicLut3D<double>> basis;
    for (int k = 0; k < 3; ++k) basis.push_back(perturbed_identity());
    std::vector<double> w{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
    return grad_check_weights(basis, w, img, tgt, gopt);
  }
  throw InvalidArgument("grad_check: unknown target '" + target + "' (expected lut_lattice or combine_weights)");
}

}  // namespace filmgrade
