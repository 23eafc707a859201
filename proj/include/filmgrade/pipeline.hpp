#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "filmgrade/blocks.hpp"
#include "filmgrade/error.hpp"
#include "filmgrade/image.hpp"
#include "filmgrade/lut.hpp"
#include "filmgrade/pyramid.hpp"
#include "filmgrade/weights.hpp"

namespace filmgrade {

struct FilmPipelineConfig {
  std::size_t depth = 2;
  std::size_t nsr_input_size = 128;
  std::size_t lut_bins = 33;
  std::size_t basis_count = 3;
  std::string weights_path;
  NsrArch nsr{};
  MaskArch mask{};
  std::size_t msrm_channels = 3;
  AdjusterArch adjuster{};

  AdjusterArch adjuster_arch() const {
    AdjusterArch a = adjuster;
    a.basis_count = basis_count;
    return a;
  }

  void validate() const {
    if (depth < 1) throw InvalidArgument("pipeline: depth must be at least 1");
    if (lut_bins < 2) throw InvalidArgument("pipeline: lut_bins must be at least 2");
    if (basis_count < 1) throw InvalidArgument("pipeline: basis_count must be at least 1");
    if (msrm_channels != 3) throw InvalidArgument("pipeline: the MSRM runs on RGB bands (3 channels)");
    const std::size_t m = std::size_t{1} << nsr.stages;
    if (nsr_input_size == 0 || nsr_input_size % m != 0) {
      throw InvalidArgument("pipeline: nsr_input_size " + std::to_string(nsr_input_size) + " must be divisible by " +
                            std::to_string(m));
    }
  }
};

// Architecture header stored as the tensor "meta.arch" so weight files are
// self-describing. Layout (one float per field):
//   [layout version, nsr width, nsr stages, mask width, lut bins,
//    basis count, adjuster width, adjuster input size, nsr input size,
//    msrm channels]
inline constexpr const char* kArchTensor = "meta.arch";
inline constexpr float kArchLayout = 1.0f;

inline std::vector<float> arch_header(const FilmPipelineConfig& cfg) {
  auto f = [](std::size_t v) { return static_cast<float>(v); };
  return {kArchLayout,    f(cfg.nsr.width),        f(cfg.nsr.stages),        f(cfg.mask.width),
          f(cfg.lut_bins), f(cfg.basis_count),     f(cfg.adjuster.width),    f(cfg.adjuster.input_size),
          f(cfg.nsr_input_size), f(cfg.msrm_channels)};
}

// Architecture read back from a container; depth and weights_path are not
// stored and keep their defaults.
inline FilmPipelineConfig config_from_weights(const WeightContainer& wc) {
  const Tensor& t = wc.get(kArchTensor);
  if (t.values.size() != 10 || t.values[0] != kArchLayout) throw FormatError("unsupported architecture header");
  for (float v : t.values)
    if (!(v >= 0.0f) || v != std::floor(v)) throw FormatError("architecture header holds a non-integer field");
  auto u = [&](int i) { return static_cast<std::size_t>(t.values[i]); };
  FilmPipelineConfig cfg;
  cfg.nsr.width = u(1);
  cfg.nsr.stages = u(2);
  cfg.mask.width = u(3);
  cfg.lut_bins = u(4);
  cfg.basis_count = u(5);
  cfg.adjuster.width = u(6);
  cfg.adjuster.input_size = u(7);
  cfg.nsr_input_size = u(8);
  cfg.msrm_channels = u(9);
  cfg.validate();
  return cfg;
}

inline std::vector<TensorSpec> required_tensor_specs(const FilmPipelineConfig& cfg) {
  std::vector<TensorSpec> specs{{kArchTensor, {10}}};
  for (const BlockGraph& g : {nsr_graph(cfg.nsr), mask_graph(cfg.mask), msrm_graph(cfg.msrm_channels),
                              adjuster_graph(cfg.adjuster_arch())}) {
    for (auto& s : required_tensors(g)) specs.push_back(std::move(s));
  }
  const auto b = static_cast<std::uint32_t>(cfg.lut_bins);
  for (std::size_t k = 0; k < cfg.basis_count; ++k) specs.push_back({basis_tensor_name(k), {b, b, b, 3}});
  return specs;
}

// Throws MissingTensorError naming the first absent tensor, or FormatError
// on a shape or header mismatch.
inline void validate_weights(const WeightContainer& wc, const FilmPipelineConfig& cfg) {
  for (const auto& s : required_tensor_specs(cfg)) wc.get(s.name, s.dims);
  if (wc.get(kArchTensor).values != arch_header(cfg)) {
    throw FormatError("weight file architecture header does not match the requested configuration");
  }
}

inline WeightContainer load_weights(const std::string& path, const FilmPipelineConfig& cfg) {
  WeightContainer wc = load_weights(path);
  validate_weights(wc, cfg);
  return wc;
}

// Seeded random network weights, identity basis LUTs, and an adjuster head
// with zero kernel and bias (1, 0, ..., 0) so the regulator starts as the
// identity.
inline WeightContainer init_weights(const FilmPipelineConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  WeightContainer wc;
  wc.set(kArchTensor, {10}, arch_header(cfg));
  init_graph(wc, nsr_graph(cfg.nsr), seed);
  init_graph(wc, mask_graph(cfg.mask), seed);
  init_graph(wc, msrm_graph(cfg.msrm_channels), seed);
  const BlockGraph adj = adjuster_graph(cfg.adjuster_arch());
  init_graph(wc, adj, seed);
  auto& head_kernel = wc.mutable_tensor("adjuster.head.kernel");
  std::fill(head_kernel.values.begin(), head_kernel.values.end(), 0.0f);
  auto& head_bias = wc.mutable_tensor("adjuster.head.bias");
  std::fill(head_bias.values.begin(), head_bias.values.end(), 0.0f);
  head_bias.values[0] = 1.0f;
  store_basis(wc, std::vector<Lut3D>(cfg.basis_count, identity_lut(cfg.lut_bins)));
  return wc;
}

// Every stage reduces to the identity: zero NSR and MSRM residuals, mask
// fixed at 1, identity basis LUTs with blend weights (1, 0, ..., 0).
inline WeightContainer identity_weights(const FilmPipelineConfig& cfg) {
  cfg.validate();
  WeightContainer wc;
  wc.set(kArchTensor, {10}, arch_header(cfg));
  zero_graph(wc, nsr_graph(cfg.nsr));
  zero_graph(wc, mask_graph(cfg.mask));
  wc.mutable_tensor("mask.conv2.bias").values[0] = 1.0f;
  zero_graph(wc, msrm_graph(cfg.msrm_channels));
  zero_graph(wc, adjuster_graph(cfg.adjuster_arch()));
  wc.mutable_tensor("adjuster.head.bias").values[0] = 1.0f;
  store_basis(wc, std::vector<Lut3D>(cfg.basis_count, identity_lut(cfg.lut_bins)));
  return wc;
}

struct StylizeTrace {
  PyramidDecomposition input_pyramid;
  ImagePlane refined_base;
  ImagePlane coarse_mask;
  std::vector<ImagePlane> refined_levels;
  ImagePlane recombined;  // before the regulator
  std::vector<double> blend_weights;
};

// Forward pass: pyramid split, NSR on the base, mask-refined bands with the
// MSRM on the coarsest band, reconstruction, then the three-LUT regulator.
//
// The NSR runs at nsr_input_size; its residual (output minus input) is
// resized back and added to the base, so a zero residual leaves the base
// bit-exact. The coarsest mask is bilinearly enlarged for finer bands.
inline ImagePlane stylize(const ImagePlane& img, const FilmPipelineConfig& cfg, const WeightContainer& wc,
                          StylizeTrace* trace = nullptr) {
  cfg.validate();
  require_rgb(img, "stylize");
  validate_weights(wc, cfg);

  PyramidDecomposition pyr = decompose(img, cfg.depth);
  const ImagePlane& base = pyr.base;

  const ImagePlane nsr_in = resize_bilinear(base, cfg.nsr_input_size, cfg.nsr_input_size);
  const ImagePlane residual = subtract(nsr_forward(nsr_in, wc, nsr_graph(cfg.nsr)), nsr_in);
  const ImagePlane refined = add(base, resize_bilinear(residual, base.height(), base.width()));

  PyramidDecomposition out;
  out.levels.resize(cfg.depth);
  out.base = refined;

  const std::size_t coarse = cfg.depth - 1;
  const ImagePlane& band = pyr.levels[coarse];
  const ImagePlane up_low = resize_bilinear(base, band.height(), band.width());
  const ImagePlane up_refined = resize_bilinear(refined, band.height(), band.width());
  ImagePlane mask = mask_net_forward(band, up_low, up_refined, wc, mask_graph(cfg.mask));
  const ImagePlane coarse_mask = mask;
  out.levels[coarse] = msrm_forward(apply_mask(band, mask), wc);
  for (std::size_t i = coarse; i-- > 0;) {
    const ImagePlane& finer = pyr.levels[i];
    mask = resize_bilinear(mask, finer.height(), finer.width());
    out.levels[i] = apply_mask(finer, mask);
  }

  ImagePlane recombined = reconstruct(out);
  const std::vector<Lut3D> basis = basis_from_weights(wc, cfg.basis_count, cfg.lut_bins);
  const AdjusterArch arch = cfg.adjuster_arch();
  const ImagePlane lr = resize_bilinear(recombined, arch.input_size, arch.input_size);
  const auto weights = adjuster_forward(lr, wc, arch);
  ImagePlane result = clamped01(apply_lut(combine_luts(basis, weights), recombined));

  if (trace) {
    trace->input_pyramid = std::move(pyr);
    trace->refined_base = refined;
    trace->coarse_mask = coarse_mask;
    trace->refined_levels = out.levels;
    trace->recombined = std::move(recombined);
    trace->blend_weights = weights;
  }
  return result;
}

}  // namespace filmgrade
