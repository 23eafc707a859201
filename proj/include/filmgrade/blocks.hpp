#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "filmgrade/error.hpp"
#include "filmgrade/image.hpp"
#include "filmgrade/parallel.hpp"
#include "filmgrade/pyramid.hpp"
#include "filmgrade/random.hpp"
#include "filmgrade/weights.hpp"

namespace filmgrade {

// ---------------------------------------------------------------------------
// Primitive operators
// ---------------------------------------------------------------------------

struct ConvParams {
  std::size_t out_ch = 0;
  std::size_t in_ch = 0;
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;  // reflect-101
  std::size_t groups = 1;
  std::vector<float> kernel;  // out_ch x (in_ch / groups) x kh x kw
  std::vector<float> bias;    // out_ch

  std::size_t in_per_group() const noexcept { return in_ch / groups; }

  void validate() const {
    if (out_ch == 0 || in_ch == 0 || kh == 0 || kw == 0 || stride == 0 || groups == 0) {
      throw InvalidArgument("conv: zero-sized parameter");
    }
    if (in_ch % groups != 0 || out_ch % groups != 0) {
      throw InvalidArgument("conv: channels " + std::to_string(in_ch) + "->" + std::to_string(out_ch) +
                            " not divisible by groups " + std::to_string(groups));
    }
    if (kernel.size() != out_ch * in_per_group() * kh * kw) throw InvalidArgument("conv: kernel size mismatch");
    if (bias.size() != out_ch) throw InvalidArgument("conv: bias size mismatch");
  }
};

// Direct cross-correlation with reflect-101 padding. Each output sample is
// accumulated as bias, then input channel, kernel row, kernel column in
// ascending order.
inline ImagePlane conv2d(const ImagePlane& x, const ConvParams& p) {
  p.validate();
  if (x.channels() != p.in_ch) {
    throw InvalidArgument("conv2d: input has " + std::to_string(x.channels()) + " channels, kernel expects " +
                          std::to_string(p.in_ch));
  }
  const auto H = static_cast<std::ptrdiff_t>(x.height());
  const auto W = static_cast<std::ptrdiff_t>(x.width());
  const auto pad = static_cast<std::ptrdiff_t>(p.padding);
  if (H + 2 * pad < static_cast<std::ptrdiff_t>(p.kh) || W + 2 * pad < static_cast<std::ptrdiff_t>(p.kw)) {
    throw InvalidArgument("conv2d: input " + x.shape_string() + " smaller than kernel");
  }
  const std::size_t oh = static_cast<std::size_t>(H + 2 * pad - static_cast<std::ptrdiff_t>(p.kh)) / p.stride + 1;
  const std::size_t ow = static_cast<std::size_t>(W + 2 * pad - static_cast<std::ptrdiff_t>(p.kw)) / p.stride + 1;

  std::vector<std::size_t> col(ow * p.kw);
  for (std::size_t ox = 0; ox < ow; ++ox)
    for (std::size_t kx = 0; kx < p.kw; ++kx)
      col[ox * p.kw + kx] = static_cast<std::size_t>(pyramid_detail::reflect101(
          static_cast<std::ptrdiff_t>(ox * p.stride + kx) - pad, W));
  std::vector<std::size_t> row(oh * p.kh);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ky = 0; ky < p.kh; ++ky)
      row[oy * p.kh + ky] = static_cast<std::size_t>(pyramid_detail::reflect101(
          static_cast<std::ptrdiff_t>(oy * p.stride + ky) - pad, H));

  const std::size_t ipg = p.in_per_group();
  const std::size_t opg = p.out_ch / p.groups;
  ImagePlane out(oh, ow, p.out_ch);
  parallel_for(0, oh, [&](std::size_t oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      float* dst = out.pixel(oy, ox);
      for (std::size_t oc = 0; oc < p.out_ch; ++oc) {
        const std::size_t first_in = (oc / opg) * ipg;
        const float* w = &p.kernel[oc * ipg * p.kh * p.kw];
        float acc = p.bias[oc];
        for (std::size_t ic = 0; ic < ipg; ++ic) {
          for (std::size_t ky = 0; ky < p.kh; ++ky) {
            const std::size_t sy = row[oy * p.kh + ky];
            for (std::size_t kx = 0; kx < p.kw; ++kx) {
              acc += *w++ * x.at(sy, col[ox * p.kw + kx], first_in + ic);
            }
          }
        }
        dst[oc] = acc;
      }
    }
  }, 2);
  return out;
}

// Per-position normalisation across channels.
inline ImagePlane layer_norm(const ImagePlane& x, std::span<const float> gamma, std::span<const float> beta,
                             float eps = 1e-6f) {
  const std::size_t C = x.channels();
  if (gamma.size() != C || beta.size() != C) {
    throw InvalidArgument("layer_norm: gamma/beta length must equal channel count " + std::to_string(C));
  }
  if (!(eps > 0.0f)) throw InvalidArgument("layer_norm: eps must be positive");
  ImagePlane out(x.height(), x.width(), C);
  parallel_for(0, x.height(), [&](std::size_t y) {
    for (std::size_t xx = 0; xx < x.width(); ++xx) {
      const float* s = x.pixel(y, xx);
      double mean = 0.0;
      for (std::size_t c = 0; c < C; ++c) mean += s[c];
      mean /= static_cast<double>(C);
      double var = 0.0;
      for (std::size_t c = 0; c < C; ++c) var += (s[c] - mean) * (s[c] - mean);
      var /= static_cast<double>(C);
      const double inv = 1.0 / std::sqrt(var + eps);
      float* d = out.pixel(y, xx);
      for (std::size_t c = 0; c < C; ++c) d[c] = static_cast<float>((s[c] - mean) * inv * gamma[c] + beta[c]);
    }
  }, 4);
  return out;
}

// Splits 2C channels into halves X, Y and returns X * Y.
inline ImagePlane simple_gate(const ImagePlane& x) {
  if (x.channels() == 0 || x.channels() % 2 != 0) {
    throw InvalidArgument("simple_gate: channel count must be even, got " + std::to_string(x.channels()));
  }
  const std::size_t C = x.channels() / 2;
  ImagePlane out(x.height(), x.width(), C);
  for (std::size_t y = 0; y < x.height(); ++y)
    for (std::size_t xx = 0; xx < x.width(); ++xx) {
      const float* s = x.pixel(y, xx);
      float* d = out.pixel(y, xx);
      for (std::size_t c = 0; c < C; ++c) d[c] = s[c] * s[c + C];
    }
  return out;
}

inline std::vector<double> global_average_pool(const ImagePlane& x) {
  std::vector<double> mean(x.channels(), 0.0);
  if (x.pixel_count() == 0) return mean;
  for (std::size_t y = 0; y < x.height(); ++y)
    for (std::size_t xx = 0; xx < x.width(); ++xx) {
      const float* s = x.pixel(y, xx);
      for (std::size_t c = 0; c < x.channels(); ++c) mean[c] += s[c];
    }
  for (double& m : mean) m /= static_cast<double>(x.pixel_count());
  return mean;
}

// 1x1 convolution applied to a pooled channel vector.
inline std::vector<double> channel_affine(const ConvParams& w, const std::vector<double>& v) {
  w.validate();
  if (w.kh != 1 || w.kw != 1 || w.groups != 1) throw InvalidArgument("channel_affine: expects a dense 1x1 kernel");
  if (v.size() != w.in_ch) {
    throw InvalidArgument("channel_affine: vector has " + std::to_string(v.size()) + " channels, kernel expects " +
                          std::to_string(w.in_ch));
  }
  std::vector<double> out(w.out_ch);
  for (std::size_t o = 0; o < w.out_ch; ++o) {
    double acc = w.bias[o];
    for (std::size_t i = 0; i < w.in_ch; ++i) acc += static_cast<double>(w.kernel[o * w.in_ch + i]) * v[i];
    out[o] = acc;
  }
  return out;
}

inline ImagePlane scale_channels(const ImagePlane& x, const std::vector<double>& scale) {
  if (scale.size() != x.channels()) throw InvalidArgument("scale_channels: length mismatch");
  ImagePlane out = x;
  for (std::size_t y = 0; y < x.height(); ++y)
    for (std::size_t xx = 0; xx < x.width(); ++xx) {
      float* d = out.pixel(y, xx);
      for (std::size_t c = 0; c < x.channels(); ++c) d[c] = static_cast<float>(d[c] * scale[c]);
    }
  return out;
}

// Simplified channel attention: x * W pool(x).
inline ImagePlane sca(const ImagePlane& x, const ConvParams& w) {
  if (w.in_ch != x.channels() || w.out_ch != x.channels()) {
    throw InvalidArgument("sca: weight maps " + std::to_string(w.in_ch) + "->" + std::to_string(w.out_ch) +
                          " channels, input has " + std::to_string(x.channels()));
  }
  return scale_channels(x, channel_affine(w, global_average_pool(x)));
}

// Pixel-wise H (x) M. The mask has one channel (broadcast) or as many as hf.
inline ImagePlane apply_mask(const ImagePlane& hf, const ImagePlane& mask) {
  if (!hf.same_size(mask)) {
    throw InvalidArgument("apply_mask: size mismatch " + hf.shape_string() + " vs " + mask.shape_string());
  }
  if (mask.channels() != 1 && mask.channels() != hf.channels()) {
    throw InvalidArgument("apply_mask: mask must have 1 or " + std::to_string(hf.channels()) + " channels");
  }
  ImagePlane out = hf;
  const bool broadcast = mask.channels() == 1;
  for (std::size_t y = 0; y < hf.height(); ++y)
    for (std::size_t x = 0; x < hf.width(); ++x) {
      float* d = out.pixel(y, x);
      const float* m = mask.pixel(y, x);
      for (std::size_t c = 0; c < hf.channels(); ++c) d[c] *= broadcast ? m[0] : m[c];
    }
  return out;
}

inline ImagePlane pixel_shuffle(const ImagePlane& x, std::size_t r) {
  if (r == 0 || x.channels() % (r * r) != 0) throw InvalidArgument("pixel_shuffle: channels not divisible by r^2");
  const std::size_t C = x.channels() / (r * r);
  ImagePlane out(x.height() * r, x.width() * r, C);
  for (std::size_t y = 0; y < x.height(); ++y)
    for (std::size_t xx = 0; xx < x.width(); ++xx) {
      const float* s = x.pixel(y, xx);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < r; ++j) out.at(y * r + i, xx * r + j, c) = s[(c * r + i) * r + j];
    }
  return out;
}

// Average pooling with kernel = stride = r; partial edge windows average the
// pixels they cover.
inline ImagePlane average_pool(const ImagePlane& x, std::size_t r) {
  if (r == 0) throw InvalidArgument("average_pool: stride must be positive");
  const std::size_t oh = (x.height() + r - 1) / r;
  const std::size_t ow = (x.width() + r - 1) / r;
  const std::size_t C = x.channels();
  ImagePlane out(oh, ow, C);
  std::vector<double> acc(C);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox) {
      std::fill(acc.begin(), acc.end(), 0.0);
      std::size_t n = 0;
      for (std::size_t y = oy * r; y < std::min(x.height(), (oy + 1) * r); ++y)
        for (std::size_t xx = ox * r; xx < std::min(x.width(), (ox + 1) * r); ++xx, ++n) {
          const float* s = x.pixel(y, xx);
          for (std::size_t c = 0; c < C; ++c) acc[c] += s[c];
        }
      float* d = out.pixel(oy, ox);
      for (std::size_t c = 0; c < C; ++c) d[c] = static_cast<float>(acc[c] / static_cast<double>(n));
    }
  return out;
}

// [x, up(pool_r1(x)), up(pool_r2(x)), ...] with bilinear upsampling.
inline ImagePlane spatial_pool_pyramid(const ImagePlane& x, const std::vector<std::size_t>& strides) {
  std::vector<ImagePlane> parts;
  parts.reserve(strides.size());
  for (std::size_t r : strides) parts.push_back(resize_bilinear(average_pool(x, r), x.height(), x.width()));
  std::vector<const ImagePlane*> ptrs{&x};
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat_channels(std::span<const ImagePlane* const>(ptrs));
}

inline ImagePlane leaky_relu(const ImagePlane& x, float slope) {
  ImagePlane out = x;
  for (float& v : out.samples()) v = v >= 0.0f ? v : v * slope;
  return out;
}

// Squeeze-and-excitation: pool -> fc1 -> fc2 -> sigmoid -> per-channel scale.
// `gate_override` replaces the sigmoid output by a constant.
inline ImagePlane se_gate(const ImagePlane& x, const ConvParams& fc1, const ConvParams& fc2,
                          std::optional<float> gate_override = std::nullopt) {
  std::vector<double> gate;
  if (gate_override) {
    gate.assign(x.channels(), *gate_override);
  } else {
    gate = channel_affine(fc2, channel_affine(fc1, global_average_pool(x)));
    if (gate.size() != x.channels()) throw InvalidArgument("se_gate: excitation width mismatch");
    for (double& g : gate) g = 1.0 / (1.0 + std::exp(-g));
  }
  return scale_channels(x, gate);
}

// ---------------------------------------------------------------------------
// Block graphs
// ---------------------------------------------------------------------------

enum class OpKind : std::uint8_t {
  Conv2d,
  LayerNorm,
  SimpleGate,
  Sca,
  Add,
  Concat,
  PixelShuffle,
  SeGate,
  SpatialPoolPyramid,
  LeakyRelu,
  GlobalPool,
};

struct OpInfo {
  OpKind kind;
  const char* name;
  bool saturating;  // contains a bounded squashing function (sigmoid, tanh, softmax)
};

inline constexpr OpInfo kOpRegistry[] = {
    {OpKind::Conv2d, "conv2d", false},
    {OpKind::LayerNorm, "layer_norm", false},
    {OpKind::SimpleGate, "simple_gate", false},
    {OpKind::Sca, "sca", false},
    {OpKind::Add, "add", false},
    {OpKind::Concat, "concat", false},
    {OpKind::PixelShuffle, "pixel_shuffle", false},
    {OpKind::SeGate, "se_gate", true},
    {OpKind::SpatialPoolPyramid, "spatial_pool_pyramid", false},
    {OpKind::LeakyRelu, "leaky_relu", false},
    {OpKind::GlobalPool, "global_pool", false},
};

inline const OpInfo& op_info(OpKind k) {
  for (const auto& info : kOpRegistry)
    if (info.kind == k) return info;
  throw InvalidArgument("unregistered operator");
}

struct OpNode {
  OpKind kind;
  std::vector<std::string> inputs;
  std::string output;
  std::string params;  // weight-name prefix; empty for parameter-free ops
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  std::size_t hidden = 0;  // SE bottleneck width
  float slope = 0.0f;      // leaky ReLU
  std::vector<std::size_t> pool_strides;
};

// Ordered operator list over named buffers. "input" is the graph input.
struct BlockGraph {
  std::string name;
  std::size_t input_channels = 0;
  std::string output;
  std::vector<OpNode> nodes;
};

struct TensorSpec {
  std::string name;
  std::vector<std::uint32_t> dims;
};

namespace graph_detail {

inline std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

inline std::vector<TensorSpec> conv_tensors(const std::string& prefix, std::size_t out, std::size_t in_per_group,
                                            std::size_t k) {
  return {{prefix + ".kernel", {u32(out), u32(in_per_group), u32(k), u32(k)}}, {prefix + ".bias", {u32(out)}}};
}

inline void append(std::vector<TensorSpec>& dst, std::vector<TensorSpec> src) {
  for (auto& t : src) dst.push_back(std::move(t));
}

inline ConvParams load_conv(const WeightContainer& wc, const std::string& prefix, std::size_t out, std::size_t in,
                            std::size_t k, std::size_t stride, std::size_t padding, std::size_t groups) {
  ConvParams p;
  p.out_ch = out;
  p.in_ch = in;
  p.kh = p.kw = k;
  p.stride = stride;
  p.padding = padding;
  p.groups = groups;
  p.kernel = wc.get(prefix + ".kernel", {u32(out), u32(in / groups), u32(k), u32(k)}).values;
  p.bias = wc.get(prefix + ".bias", {u32(out)}).values;
  return p;
}

}  // namespace graph_detail

// Tensors the graph reads from a WeightContainer, in node order.
inline std::vector<TensorSpec> required_tensors(const BlockGraph& g) {
  using namespace graph_detail;
  std::vector<TensorSpec> specs;
  for (const auto& n : g.nodes) {
    switch (n.kind) {
      case OpKind::Conv2d:
        append(specs, conv_tensors(n.params, n.out_ch, n.in_ch / n.groups, n.kernel));
        break;
      case OpKind::LayerNorm:
        specs.push_back({n.params + ".gamma", {u32(n.in_ch)}});
        specs.push_back({n.params + ".beta", {u32(n.in_ch)}});
        break;
      case OpKind::Sca:
        append(specs, conv_tensors(n.params, n.in_ch, n.in_ch, 1));
        break;
      case OpKind::SeGate:
        append(specs, conv_tensors(n.params + ".fc1", n.hidden, n.in_ch, 1));
        append(specs, conv_tensors(n.params + ".fc2", n.in_ch, n.hidden, 1));
        break;
      default:
        break;
    }
  }
  return specs;
}

// Propagates channel counts through the graph and checks operator arity.
// Returns the output channel count.
inline std::size_t validate_graph(const BlockGraph& g) {
  std::map<std::string, std::size_t> ch{{"input", g.input_channels}};
  auto fail = [&](const OpNode& n, const std::string& why) -> void {
    throw InvalidArgument("graph '" + g.name + "': node '" + n.output + "' (" + op_info(n.kind).name + "): " + why);
  };
  for (const auto& n : g.nodes) {
    std::vector<std::size_t> in;
    for (const auto& name : n.inputs) {
      auto it = ch.find(name);
      if (it == ch.end()) fail(n, "unknown input buffer '" + name + "'");
      in.push_back(it->second);
    }
    const std::size_t expected_inputs = (n.kind == OpKind::Add) ? 2 : (n.kind == OpKind::Concat ? in.size() : 1);
    if (in.size() != expected_inputs || in.empty()) fail(n, "wrong number of inputs");
    std::size_t out = in[0];
    switch (n.kind) {
      case OpKind::Conv2d:
        if (in[0] != n.in_ch) fail(n, "arity mismatch: got " + std::to_string(in[0]) + " channels");
        if (n.in_ch % n.groups || n.out_ch % n.groups) fail(n, "channels not divisible by groups");
        out = n.out_ch;
        break;
      case OpKind::LayerNorm:
      case OpKind::Sca:
      case OpKind::SeGate:
        if (in[0] != n.in_ch) fail(n, "arity mismatch: got " + std::to_string(in[0]) + " channels");
        break;
      case OpKind::SimpleGate:
        if (in[0] % 2 != 0) fail(n, "odd channel count " + std::to_string(in[0]));
        out = in[0] / 2;
        break;
      case OpKind::Add:
        if (in[0] != in[1]) fail(n, "operands have different channel counts");
        break;
      case OpKind::Concat:
        out = 0;
        for (auto c : in) out += c;
        break;
      case OpKind::PixelShuffle:
        if (in[0] % (n.stride * n.stride) != 0) fail(n, "channels not divisible by factor^2");
        out = in[0] / (n.stride * n.stride);
        break;
      case OpKind::SpatialPoolPyramid:
        out = in[0] * (n.pool_strides.size() + 1);
        break;
      case OpKind::LeakyRelu:
      case OpKind::GlobalPool:
        break;
    }
    ch[n.output] = out;
  }
  auto it = ch.find(g.output);
  if (it == ch.end()) throw InvalidArgument("graph '" + g.name + "': output buffer '" + g.output + "' never written");
  return it->second;
}

struct ForwardOptions {
  std::optional<float> se_gate_override;
  // When set, every intermediate buffer is recorded here by name.
  std::map<std::string, ImagePlane>* trace = nullptr;
};

inline ImagePlane run_graph(const BlockGraph& g, const WeightContainer& wc, const ImagePlane& input,
                            const ForwardOptions& opt = {}) {
  using namespace graph_detail;
  if (input.channels() != g.input_channels) {
    throw InvalidArgument("graph '" + g.name + "': input has " + std::to_string(input.channels()) +
                          " channels, expected " + std::to_string(g.input_channels));
  }
  std::map<std::string, ImagePlane> buf;
  buf["input"] = input;
  for (const auto& n : g.nodes) {
    auto arg = [&](std::size_t i) -> const ImagePlane& {
      auto it = buf.find(n.inputs.at(i));
      if (it == buf.end()) throw InvalidArgument("graph '" + g.name + "': unknown buffer '" + n.inputs[i] + "'");
      return it->second;
    };
    ImagePlane out;
    switch (n.kind) {
      case OpKind::Conv2d:
        out = conv2d(arg(0), load_conv(wc, n.params, n.out_ch, n.in_ch, n.kernel, n.stride, n.padding, n.groups));
        break;
      case OpKind::LayerNorm:
        out = layer_norm(arg(0), wc.get(n.params + ".gamma", {u32(n.in_ch)}).values,
                         wc.get(n.params + ".beta", {u32(n.in_ch)}).values);
        break;
      case OpKind::SimpleGate:
        out = simple_gate(arg(0));
        break;
      case OpKind::Sca:
        out = sca(arg(0), load_conv(wc, n.params, n.in_ch, n.in_ch, 1, 1, 0, 1));
        break;
      case OpKind::Add:
        out = add(arg(0), arg(1));
        break;
      case OpKind::Concat: {
        std::vector<const ImagePlane*> parts;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) parts.push_back(&arg(i));
        out = concat_channels(std::span<const ImagePlane* const>(parts));
        break;
      }
      case OpKind::PixelShuffle:
        out = pixel_shuffle(arg(0), n.stride);
        break;
      case OpKind::SeGate:
        out = se_gate(arg(0), load_conv(wc, n.params + ".fc1", n.hidden, n.in_ch, 1, 1, 0, 1),
                      load_conv(wc, n.params + ".fc2", n.in_ch, n.hidden, 1, 1, 0, 1), opt.se_gate_override);
        break;
      case OpKind::SpatialPoolPyramid:
        out = spatial_pool_pyramid(arg(0), n.pool_strides);
        break;
      case OpKind::LeakyRelu:
        out = leaky_relu(arg(0), n.slope);
        break;
      case OpKind::GlobalPool: {
        const auto m = global_average_pool(arg(0));
        out = ImagePlane(1, 1, m.size());
        for (std::size_t c = 0; c < m.size(); ++c) out.at(0, 0, c) = static_cast<float>(m[c]);
        break;
      }
    }
    buf[n.output] = std::move(out);
  }
  if (opt.trace) *opt.trace = buf;
  auto it = buf.find(g.output);
  if (it == buf.end()) throw InvalidArgument("graph '" + g.name + "': output never written");
  return std::move(it->second);
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

namespace graph_detail {

inline OpNode conv(std::string in, std::string out, std::string params, std::size_t cin, std::size_t cout,
                   std::size_t k, std::size_t stride = 1, std::size_t groups = 1) {
  OpNode n{OpKind::Conv2d, {std::move(in)}, std::move(out), std::move(params)};
  n.in_ch = cin;
  n.out_ch = cout;
  n.kernel = k;
  n.stride = stride;
  n.padding = (stride == 1) ? k / 2 : (k == stride ? 0 : k / 2);
  n.groups = groups;
  return n;
}

inline OpNode unary(OpKind kind, std::string in, std::string out, std::string params = {}, std::size_t ch = 0) {
  OpNode n{kind, {std::move(in)}, std::move(out), std::move(params)};
  n.in_ch = ch;
  return n;
}

inline OpNode binary(OpKind kind, std::string a, std::string b, std::string out) {
  return OpNode{kind, {std::move(a), std::move(b)}, std::move(out), {}};
}

// LayerNorm -> 1x1 conv (c->2c) -> depthwise 3x3 -> SimpleGate -> SCA ->
// 1x1 conv, added to the block input.
inline void nsr_block(std::vector<OpNode>& nodes, const std::string& in, const std::string& out,
                      const std::string& prefix, std::size_t c) {
  const std::string p = prefix + ".";
  nodes.push_back(unary(OpKind::LayerNorm, in, p + "norm", prefix + ".norm", c));
  nodes.push_back(conv(p + "norm", p + "conv1", prefix + ".conv1", c, 2 * c, 1));
  // Depthwise 3x3 stands in for the deformable convolution.
  nodes.push_back(conv(p + "conv1", p + "conv2", prefix + ".conv2", 2 * c, 2 * c, 3, 1, 2 * c));
  nodes.push_back(unary(OpKind::SimpleGate, p + "conv2", p + "gate"));
  nodes.push_back(unary(OpKind::Sca, p + "gate", p + "sca", prefix + ".sca", c));
  nodes.push_back(conv(p + "sca", p + "conv3", prefix + ".conv3", c, c, 1));
  nodes.push_back(binary(OpKind::Add, in, p + "conv3", out));
}

}  // namespace graph_detail

struct NsrArch {
  std::size_t width = 16;
  std::size_t stages = 2;
};

// UNet of NSR blocks: intro conv, `stages` encoder levels with 2x2 strided
// downsampling, one middle block, mirrored decoder with pixel-shuffle
// upsampling and additive skips, output conv plus a global residual.
inline BlockGraph nsr_graph(const NsrArch& arch = {}) {
  using namespace graph_detail;
  if (arch.width == 0 || arch.stages == 0) throw InvalidArgument("nsr_graph: width and stages must be positive");
  BlockGraph g{"nsr", 3, "output", {}};
  auto& v = g.nodes;
  v.push_back(conv("input", "intro", "nsr.intro", 3, arch.width, 3));
  std::string cur = "intro";
  std::size_t c = arch.width;
  for (std::size_t s = 0; s < arch.stages; ++s) {
    const std::string id = std::to_string(s);
    nsr_block(v, cur, "enc" + id, "nsr.enc" + id, c);
    v.push_back(conv("enc" + id, "down" + id, "nsr.down" + id, c, 2 * c, 2, 2));
    cur = "down" + id;
    c *= 2;
  }
  nsr_block(v, cur, "middle", "nsr.middle", c);
  cur = "middle";
  for (std::size_t s = arch.stages; s-- > 0;) {
    const std::string id = std::to_string(s);
    v.push_back(conv(cur, "up" + id + ".expand", "nsr.up" + id, c, 2 * c, 1));
    OpNode shuffle = unary(OpKind::PixelShuffle, "up" + id + ".expand", "up" + id);
    shuffle.stride = 2;
    v.push_back(shuffle);
    c /= 2;
    v.push_back(binary(OpKind::Add, "up" + id, "enc" + id, "skip" + id));
    nsr_block(v, "skip" + id, "dec" + id, "nsr.dec" + id, c);
    cur = "dec" + id;
  }
  v.push_back(conv(cur, "ending", "nsr.ending", c, 3, 3));
  v.push_back(binary(OpKind::Add, "input", "ending", "output"));
  return g;
}

struct MaskArch {
  std::size_t width = 16;
};

// 9 -> 2w -> gate -> 2w -> gate -> 1, all 3x3.
inline BlockGraph mask_graph(const MaskArch& arch = {}) {
  using namespace graph_detail;
  if (arch.width == 0) throw InvalidArgument("mask_graph: width must be positive");
  BlockGraph g{"mask", 9, "mask", {}};
  auto& v = g.nodes;
  v.push_back(conv("input", "conv0", "mask.conv0", 9, 2 * arch.width, 3));
  v.push_back(unary(OpKind::SimpleGate, "conv0", "gate0"));
  v.push_back(conv("gate0", "conv1", "mask.conv1", arch.width, 2 * arch.width, 3));
  v.push_back(unary(OpKind::SimpleGate, "conv1", "gate1"));
  v.push_back(conv("gate1", "mask", "mask.conv2", arch.width, 1, 3));
  return g;
}

// Multi-scale reconstruction module over `channels` feature channels.
// Buffers of interest: "global" (after the two-branch convolution and its
// shortcut), "se" (after squeeze-and-excitation), "compressed", "output".
inline BlockGraph msrm_graph(std::size_t channels = 3) {
  using namespace graph_detail;
  if (channels == 0) throw InvalidArgument("msrm_graph: channels must be positive");
  const std::size_t c = channels;
  BlockGraph g{"msrm", c, "output", {}};
  auto& v = g.nodes;
  v.push_back(conv("input", "light.dw", "msrm.light_dw", c, c, 3, 1, c));
  v.push_back(conv("light.dw", "light", "msrm.light_pw", c, c, 1));
  v.push_back(conv("input", "standard", "msrm.standard", c, c, 3));
  v.push_back(binary(OpKind::Add, "light", "standard", "blend"));
  v.push_back(binary(OpKind::Add, "input", "blend", "global"));
  OpNode cat{OpKind::Concat, {"input", "global"}, "aggregate", {}};
  v.push_back(cat);
  OpNode se = unary(OpKind::SeGate, "aggregate", "se", "msrm.se", 2 * c);
  se.hidden = c;
  v.push_back(se);
  v.push_back(conv("se", "compressed", "msrm.compress", 2 * c, c, 3));
  OpNode spp = unary(OpKind::SpatialPoolPyramid, "compressed", "spp");
  spp.pool_strides = {2, 4, 8};
  v.push_back(spp);
  v.push_back(conv("spp", "fused", "msrm.fuse", 4 * c, c, 1));
  v.push_back(binary(OpKind::Add, "input", "fused", "output"));
  return g;
}

// ---------------------------------------------------------------------------
// Initialisation
// ---------------------------------------------------------------------------

// Seeds every tensor independently from (seed, name), so the result does
// not depend on the order tensors are visited. Kernels and biases draw from
// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)); LayerNorm gamma = 1, beta = 0.
inline void init_tensors(WeightContainer& wc, const std::vector<TensorSpec>& specs, std::uint64_t seed) {
  std::map<std::string, std::size_t> fan_in;
  for (const auto& s : specs) {
    if (s.name.ends_with(".kernel") && s.dims.size() == 4) {
      fan_in[s.name.substr(0, s.name.size() - 7)] = std::size_t{s.dims[1]} * s.dims[2] * s.dims[3];
    }
  }
  for (const auto& s : specs) {
    Tensor shape{s.dims, {}};
    std::vector<float> values(shape.numel(), 0.0f);
    if (s.name.ends_with(".gamma")) {
      std::fill(values.begin(), values.end(), 1.0f);
    } else if (s.name.ends_with(".kernel") || s.name.ends_with(".bias")) {
      const std::string owner = s.name.substr(0, s.name.rfind('.'));
      const auto it = fan_in.find(owner);
      const double fan = it == fan_in.end() ? 1.0 : static_cast<double>(it->second);
      const double bound = std::sqrt(1.0 / fan);
      SplitMix64 rng(seed ^ fnv1a(s.name));
      for (float& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
    }
    wc.set(s.name, s.dims, std::move(values));
  }
}

inline void init_graph(WeightContainer& wc, const BlockGraph& g, std::uint64_t seed) {
  init_tensors(wc, required_tensors(g), seed);
}

// Sets every tensor the graph uses to zero (LayerNorm gamma included).
inline void zero_graph(WeightContainer& wc, const BlockGraph& g) {
  for (const auto& s : required_tensors(g)) {
    Tensor shape{s.dims, {}};
    wc.set(s.name, s.dims, std::vector<float>(shape.numel(), 0.0f));
  }
}

inline void require_tensors(const WeightContainer& wc, const BlockGraph& g) {
  for (const auto& s : required_tensors(g)) wc.get(s.name, s.dims);
}

// ---------------------------------------------------------------------------
// Network entry points
// ---------------------------------------------------------------------------

inline ImagePlane nsr_forward(const ImagePlane& low_freq, const WeightContainer& wc, const BlockGraph& arch) {
  require_rgb(low_freq, "nsr_forward");
  validate_graph(arch);
  std::size_t m = 1;
  for (const auto& n : arch.nodes)
    if (n.kind == OpKind::Conv2d && n.stride > 1) m *= n.stride;
  if (low_freq.height() % m != 0 || low_freq.width() % m != 0) {
    throw InvalidArgument("nsr_forward: input " + low_freq.shape_string() + " must be divisible by " +
                          std::to_string(m));
  }
  return run_graph(arch, wc, low_freq);
}

// Single-channel mask from [finer band, up(base), up(refined base)].
inline ImagePlane mask_net_forward(const ImagePlane& prev_hf, const ImagePlane& up_low, const ImagePlane& up_refined,
                                   const WeightContainer& wc, const BlockGraph& arch = mask_graph()) {
  if (!prev_hf.same_size(up_low) || !prev_hf.same_size(up_refined)) {
    throw InvalidArgument("mask_net_forward: inputs differ in size: " + prev_hf.shape_string() + ", " +
                          up_low.shape_string() + ", " + up_refined.shape_string());
  }
  const ImagePlane cat = concat_channels({&prev_hf, &up_low, &up_refined});
  validate_graph(arch);
  return run_graph(arch, wc, cat);
}

inline ImagePlane msrm_forward(const ImagePlane& x, const WeightContainer& wc, const ForwardOptions& opt = {}) {
  const BlockGraph g = msrm_graph(x.channels());
  return run_graph(g, wc, x, opt);
}

}  // namespace filmgrade
