#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "filmgrade/blocks.hpp"
#include "filmgrade/error.hpp"
#include "filmgrade/image.hpp"
#include "filmgrade/parallel.hpp"
#include "filmgrade/weights.hpp"

namespace filmgrade {

// bins^3 lattice of RGB output colours indexed (r, g, b) with r slowest.
// Entries are not clamped; out-of-range values are legal during fitting.
template <class Real>
class BasicLut3D {
 public:
  BasicLut3D() = default;

  explicit BasicLut3D(std::size_t bins, Real fill = Real(0)) : bins_(bins) {
    if (bins < 2) throw InvalidArgument("Lut3D: bins must be at least 2, got " + std::to_string(bins));
    lattice_.assign(bins * bins * bins * 3, fill);
  }

  BasicLut3D(std::size_t bins, std::vector<Real> lattice) : bins_(bins), lattice_(std::move(lattice)) {
    if (bins < 2) throw InvalidArgument("Lut3D: bins must be at least 2, got " + std::to_string(bins));
    if (lattice_.size() != bins * bins * bins * 3) throw InvalidArgument("Lut3D: lattice size mismatch");
  }

  std::size_t bins() const noexcept { return bins_; }
  std::size_t entry_count() const noexcept { return bins_ * bins_ * bins_; }

  std::size_t node(std::size_t r, std::size_t g, std::size_t b) const noexcept {
    return (r * bins_ + g) * bins_ + b;
  }
  Real* entry(std::size_t r, std::size_t g, std::size_t b) noexcept { return &lattice_[node(r, g, b) * 3]; }
  const Real* entry(std::size_t r, std::size_t g, std::size_t b) const noexcept {
    return &lattice_[node(r, g, b) * 3];
  }

  std::span<Real> values() noexcept { return lattice_; }
  std::span<const Real> values() const noexcept { return lattice_; }

  bool all_finite() const noexcept {
    return std::all_of(lattice_.begin(), lattice_.end(), [](Real v) { return std::isfinite(v); });
  }

  template <class Other>
  BasicLut3D<Other> cast() const {
    return BasicLut3D<Other>(bins_, std::vector<Other>(lattice_.begin(), lattice_.end()));
  }

  friend bool operator==(const BasicLut3D&, const BasicLut3D&) = default;

 private:
  std::size_t bins_ = 0;
  std::vector<Real> lattice_;
};

using Lut3D = BasicLut3D<float>;

template <class Real = float>
BasicLut3D<Real> identity_lut(std::size_t bins) {
  BasicLut3D<Real> lut(bins);
  const double step = 1.0 / static_cast<double>(bins - 1);
  for (std::size_t r = 0; r < bins; ++r)
    for (std::size_t g = 0; g < bins; ++g)
      for (std::size_t b = 0; b < bins; ++b) {
        Real* e = lut.entry(r, g, b);
        e[0] = static_cast<Real>(r * step);
        e[1] = static_cast<Real>(g * step);
        e[2] = static_cast<Real>(b * step);
      }
  return lut;
}

// The eight lattice nodes around a colour and their trilinear weights.
// Corner n = 4*dr + 2*dg + db; weight = wr[dr] * wg[dg] * wb[db].
struct TrilinearStencil {
  std::array<std::uint32_t, 8> node;
  std::array<double, 8> weight;
};

// Continuous lattice coordinate v * (bins - 1) per channel; the cell index is
// clamped to [0, bins - 2] so v = 1 lands on the last node with fraction 1.
// (The literal r / (C_max / M) scale would index node M, one past the end.)
inline TrilinearStencil trilinear_stencil(std::size_t bins, double r, double g, double b) {
  const double scale = static_cast<double>(bins - 1);
  std::size_t idx[3];
  double frac[3];
  const double v[3] = {r, g, b};
  for (int c = 0; c < 3; ++c) {
    const double x = std::clamp(v[c], 0.0, 1.0) * scale;
    auto i = static_cast<std::size_t>(std::floor(x));
    i = std::min(i, bins - 2);
    idx[c] = i;
    frac[c] = x - static_cast<double>(i);
  }
  const double wr[2] = {1.0 - frac[0], frac[0]};
  const double wg[2] = {1.0 - frac[1], frac[1]};
  const double wb[2] = {1.0 - frac[2], frac[2]};
  TrilinearStencil s{};
  for (int dr = 0; dr < 2; ++dr)
    for (int dg = 0; dg < 2; ++dg)
      for (int db = 0; db < 2; ++db) {
        const int n = 4 * dr + 2 * dg + db;
        s.node[n] = static_cast<std::uint32_t>(((idx[0] + dr) * bins + idx[1] + dg) * bins + idx[2] + db);
        s.weight[n] = wr[dr] * wg[dg] * wb[db];
      }
  return s;
}

// Weighted sum over the stencil corners in corner order.
template <class Real>
std::array<double, 3> blend(const BasicLut3D<Real>& lut, const TrilinearStencil& s) {
  std::array<double, 3> out{0.0, 0.0, 0.0};
  const auto lat = lut.values();
  for (int n = 0; n < 8; ++n) {
    const std::size_t base = std::size_t{s.node[n]} * 3;
    for (int c = 0; c < 3; ++c) out[c] += s.weight[n] * static_cast<double>(lat[base + c]);
  }
  return out;
}

template <class Real>
std::array<double, 3> lookup(const BasicLut3D<Real>& lut, double r, double g, double b) {
  return blend(lut, trilinear_stencil(lut.bins(), r, g, b));
}

// Trilinear application to a 3-channel image; inputs are clamped to [0,1],
// outputs are not.
template <class Real>
ImagePlane apply_lut(const BasicLut3D<Real>& lut, const ImagePlane& img) {
  require_rgb(img, "apply_lut");
  if (lut.bins() < 2) throw InvalidArgument("apply_lut: empty LUT");
  ImagePlane out(img.height(), img.width(), 3);
  parallel_for(0, img.height(), [&](std::size_t y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const float* s = img.pixel(y, x);
      const auto v = lookup(lut, s[0], s[1], s[2]);
      float* d = out.pixel(y, x);
      for (int c = 0; c < 3; ++c) d[c] = static_cast<float>(v[c]);
    }
  }, 4);
  return out;
}

// Entrywise sum_k w_k * basis_k, accumulated in basis order.
template <class Real>
BasicLut3D<Real> combine_luts(std::span<const BasicLut3D<Real>> basis, std::span<const double> weights) {
  if (basis.empty()) throw InvalidArgument("combine_luts: empty basis");
  if (basis.size() != weights.size()) {
    throw InvalidArgument("combine_luts: " + std::to_string(basis.size()) + " LUTs but " +
                          std::to_string(weights.size()) + " weights");
  }
  const std::size_t bins = basis.front().bins();
  for (const auto& b : basis)
    if (b.bins() != bins) throw InvalidArgument("combine_luts: basis LUTs differ in bin count");
  BasicLut3D<Real> out(bins);
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) acc += weights[k] * static_cast<double>(basis[k].values()[i]);
    dst[i] = static_cast<Real>(acc);
  }
  return out;
}

template <class Real>
BasicLut3D<Real> combine_luts(const std::vector<BasicLut3D<Real>>& basis, const std::vector<double>& weights) {
  return combine_luts(std::span<const BasicLut3D<Real>>(basis), std::span<const double>(weights));
}

// ---------------------------------------------------------------------------
// Style-aware adjuster and the three-LUT regulator
// ---------------------------------------------------------------------------

struct AdjusterArch {
  std::size_t width = 8;
  std::size_t basis_count = 3;
  std::size_t input_size = 64;
};

// Four stride-2 3x3 convolutions (w, 2w, 4w, 4w channels) with leaky ReLU,
// global average pooling and a 1x1 head producing one weight per basis LUT.
// The head output is used as-is: no softmax, no clipping.
inline BlockGraph adjuster_graph(const AdjusterArch& arch = {}) {
  using graph_detail::conv;
  using graph_detail::unary;
  if (arch.width == 0 || arch.basis_count == 0) throw InvalidArgument("adjuster_graph: empty architecture");
  BlockGraph g{"adjuster", 3, "weights", {}};
  const std::size_t widths[4] = {arch.width, 2 * arch.width, 4 * arch.width, 4 * arch.width};
  std::string cur = "input";
  std::size_t cin = 3;
  for (int i = 0; i < 4; ++i) {
    const std::string id = std::to_string(i);
    g.nodes.push_back(conv(cur, "conv" + id, "adjuster.conv" + id, cin, widths[i], 3, 2));
    OpNode act = unary(OpKind::LeakyRelu, "conv" + id, "act" + id);
    act.slope = 0.2f;
    g.nodes.push_back(act);
    cur = "act" + id;
    cin = widths[i];
  }
  g.nodes.push_back(unary(OpKind::GlobalPool, cur, "pooled"));
  g.nodes.push_back(conv("pooled", "weights", "adjuster.head", cin, arch.basis_count, 1));
  return g;
}

inline std::vector<double> adjuster_forward(const ImagePlane& lr_img, const WeightContainer& wc,
                                            const AdjusterArch& arch = {}) {
  require_rgb(lr_img, "adjuster_forward");
  const BlockGraph g = adjuster_graph(arch);
  const ImagePlane out = run_graph(g, wc, lr_img);
  std::vector<double> w(out.channels());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = out.at(0, 0, k);
  return w;
}

inline std::string basis_tensor_name(std::size_t k) { return "ttr.basis" + std::to_string(k); }

inline std::vector<Lut3D> basis_from_weights(const WeightContainer& wc, std::size_t count, std::size_t bins) {
  std::vector<Lut3D> basis;
  const auto b = static_cast<std::uint32_t>(bins);
  for (std::size_t k = 0; k < count; ++k) basis.emplace_back(bins, wc.get(basis_tensor_name(k), {b, b, b, 3}).values);
  return basis;
}

inline void store_basis(WeightContainer& wc, const std::vector<Lut3D>& basis) {
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const auto b = static_cast<std::uint32_t>(basis[k].bins());
    const auto v = basis[k].values();
    wc.set(basis_tensor_name(k), {b, b, b, 3}, std::vector<float>(v.begin(), v.end()));
  }
}

// Predicts blend weights from a low-resolution copy, fuses the basis and
// applies the result at full resolution, clamped to [0,1].
inline ImagePlane ttr_apply(const ImagePlane& hr_img, const std::vector<Lut3D>& basis, const WeightContainer& adj,
                            const AdjusterArch& arch = {}) {
  require_rgb(hr_img, "ttr_apply");
  const ImagePlane lr = resize_bilinear(hr_img, arch.input_size, arch.input_size);
  const auto weights = adjuster_forward(lr, adj, arch);
  const Lut3D fused = combine_luts(basis, weights);
  return clamped01(apply_lut(fused, hr_img));
}

}  // namespace filmgrade
