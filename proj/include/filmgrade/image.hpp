#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "filmgrade/error.hpp"
#include "filmgrade/parallel.hpp"

namespace filmgrade {

// H x W x C raster of 32-bit samples, row-major with channels interleaved.
// Colour images hold 1 or 3 channels in [0, 1]; feature maps may carry any
// channel count and unbounded values.
class ImagePlane {
 public:
  ImagePlane() = default;

  ImagePlane(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f)
      : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {}

  ImagePlane(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (data_.size() != height_ * width_ * channels_) {
      throw InvalidArgument("image data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(height_) + "x" +
                            std::to_string(width_) + "x" + std::to_string(channels_));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
    return data_[(y * width_ + x) * channels_ + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return data_[(y * width_ + x) * channels_ + c];
  }

  float* pixel(std::size_t y, std::size_t x) noexcept { return data_.data() + (y * width_ + x) * channels_; }
  const float* pixel(std::size_t y, std::size_t x) const noexcept {
    return data_.data() + (y * width_ + x) * channels_;
  }

  std::span<float> samples() noexcept { return data_; }
  std::span<const float> samples() const noexcept { return data_; }
  const std::vector<float>& vector() const noexcept { return data_; }

  bool same_shape(const ImagePlane& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  bool same_size(const ImagePlane& o) const noexcept { return height_ == o.height_ && width_ == o.width_; }

  std::string shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
  }

  friend bool operator==(const ImagePlane&, const ImagePlane&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

inline void require_color(const ImagePlane& img, const char* what) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw InvalidArgument(std::string(what) + ": colour image must have 1 or 3 channels, got " +
                          std::to_string(img.channels()));
  }
}

inline void require_rgb(const ImagePlane& img, const char* what) {
  if (img.channels() != 3) {
    throw InvalidArgument(std::string(what) + ": expected 3 channels, got " + std::to_string(img.channels()));
  }
}

inline void require_same_shape(const ImagePlane& a, const ImagePlane& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

inline ImagePlane add(const ImagePlane& a, const ImagePlane& b) {
  require_same_shape(a, b, "add");
  ImagePlane out = a;
  auto o = out.samples();
  auto s = b.samples();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += s[i];
  return out;
}

inline ImagePlane subtract(const ImagePlane& a, const ImagePlane& b) {
  require_same_shape(a, b, "subtract");
  ImagePlane out = a;
  auto o = out.samples();
  auto s = b.samples();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= s[i];
  return out;
}

inline ImagePlane scaled(const ImagePlane& a, float k) {
  ImagePlane out = a;
  for (float& v : out.samples()) v *= k;
  return out;
}

inline ImagePlane clamped01(ImagePlane img) {
  for (float& v : img.samples()) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

inline float max_abs_difference(const ImagePlane& a, const ImagePlane& b) {
  require_same_shape(a, b, "max_abs_difference");
  float m = 0.0f;
  auto x = a.samples();
  auto y = b.samples();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i] - y[i]));
  return m;
}

// Stacks feature maps of equal spatial size along the channel axis.
inline ImagePlane concat_channels(std::span<const ImagePlane* const> parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: no inputs");
  const std::size_t h = parts.front()->height();
  const std::size_t w = parts.front()->width();
  std::size_t total = 0;
  for (const ImagePlane* p : parts) {
    if (p->height() != h || p->width() != w) {
      throw InvalidArgument("concat_channels: spatial size mismatch " + parts.front()->shape_string() + " vs " +
                            p->shape_string());
    }
    total += p->channels();
  }
  ImagePlane out(h, w, total);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float* dst = out.pixel(y, x);
      for (const ImagePlane* p : parts) dst = std::copy_n(p->pixel(y, x), p->channels(), dst);
    }
  }
  return out;
}

inline ImagePlane concat_channels(std::initializer_list<const ImagePlane*> parts) {
  return concat_channels(std::span<const ImagePlane* const>(parts.begin(), parts.size()));
}

inline ImagePlane slice_channels(const ImagePlane& img, std::size_t first, std::size_t count) {
  if (first + count > img.channels()) throw InvalidArgument("slice_channels: channel range out of bounds");
  ImagePlane out(img.height(), img.width(), count);
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) std::copy_n(img.pixel(y, x) + first, count, out.pixel(y, x));
  return out;
}

// Top-left crop to the largest size divisible by `multiple` in both axes.
inline ImagePlane crop_to_multiple(const ImagePlane& img, std::size_t multiple) {
  if (multiple == 0) throw InvalidArgument("crop_to_multiple: multiple must be positive");
  const std::size_t h = img.height() / multiple * multiple;
  const std::size_t w = img.width() / multiple * multiple;
  if (h == 0 || w == 0) throw InvalidArgument("crop_to_multiple: image smaller than " + std::to_string(multiple));
  ImagePlane out(h, w, img.channels());
  for (std::size_t y = 0; y < h; ++y) std::copy_n(img.pixel(y, 0), w * img.channels(), out.pixel(y, 0));
  return out;
}

namespace detail {

struct LinearTap {
  std::size_t i0;
  std::size_t i1;
  double f;
};

// Half-pixel-centre source coordinates, clamped at the edges.
inline std::vector<LinearTap> linear_taps(std::size_t in, std::size_t out) {
  std::vector<LinearTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    auto i0 = static_cast<std::size_t>(std::floor(src));
    std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace detail

// Bilinear resampling with half-pixel centres (align_corners = false).
inline ImagePlane resize_bilinear(const ImagePlane& img, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw InvalidArgument("resize_bilinear: target dimension must be at least 1");
  if (img.empty()) throw InvalidArgument("resize_bilinear: empty input");
  if (out_h == img.height() && out_w == img.width()) return img;

  const auto ty = detail::linear_taps(img.height(), out_h);
  const auto tx = detail::linear_taps(img.width(), out_w);
  const std::size_t c = img.channels();
  ImagePlane out(out_h, out_w, c);
  parallel_for(0, out_h, [&](std::size_t y) {
    const auto& vy = ty[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const auto& vx = tx[x];
      const float* p00 = img.pixel(vy.i0, vx.i0);
      const float* p01 = img.pixel(vy.i0, vx.i1);
      const float* p10 = img.pixel(vy.i1, vx.i0);
      const float* p11 = img.pixel(vy.i1, vx.i1);
      float* dst = out.pixel(y, x);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = p00[k] * (1.0 - vx.f) + p01[k] * vx.f;
        const double bottom = p10[k] * (1.0 - vx.f) + p11[k] * vx.f;
        dst[k] = static_cast<float>(top * (1.0 - vy.f) + bottom * vy.f);
      }
    }
  }, 4);
  return out;
}

}  // namespace filmgrade
