#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace filmgrade {

struct LabColor {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;
};

using Rgb = std::array<double, 3>;

namespace color {

// D65 reference white, 2 degree observer.
inline constexpr double kWhiteX = 0.95047;
inline constexpr double kWhiteY = 1.0;
inline constexpr double kWhiteZ = 1.08883;

inline constexpr double kDelta = 6.0 / 29.0;

inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

inline double lab_f(double t) {
  constexpr double d3 = kDelta * kDelta * kDelta;
  return t > d3 ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

inline double lab_f_inverse(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

}  // namespace color

// sRGB (gamma encoded, [0,1], clamped) to CIELAB under D65.
inline LabColor srgb_to_lab(const Rgb& rgb) {
  double lin[3];
  for (int i = 0; i < 3; ++i) lin[i] = color::srgb_to_linear(std::clamp(rgb[i], 0.0, 1.0));
  const double X = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
  const double Y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
  const double Z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
  const double fx = color::lab_f(X / color::kWhiteX);
  const double fy = color::lab_f(Y / color::kWhiteY);
  const double fz = color::lab_f(Z / color::kWhiteZ);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

// Inverse of srgb_to_lab; out-of-gamut results are clamped to [0,1].
inline Rgb lab_to_srgb(const LabColor& lab) {
  const double fy = (lab.L + 16.0) / 116.0;
  const double fx = fy + lab.a / 500.0;
  const double fz = fy - lab.b / 200.0;
  const double X = color::kWhiteX * color::lab_f_inverse(fx);
  const double Y = color::kWhiteY * color::lab_f_inverse(fy);
  const double Z = color::kWhiteZ * color::lab_f_inverse(fz);
  // Exact inverse of the forward matrix above.
  const double r = 3.2404548360214084 * X - 1.5371388501025751 * Y - 0.49853154686848088 * Z;
  const double g = -0.96926638987565374 * X + 1.8760109288424912 * Y + 0.041556082346673519 * Z;
  const double b = 0.055643419604213656 * X - 0.20402585426769815 * Y + 1.0572251624579288 * Z;
  return {std::clamp(color::linear_to_srgb(r), 0.0, 1.0), std::clamp(color::linear_to_srgb(g), 0.0, 1.0),
          std::clamp(color::linear_to_srgb(b), 0.0, 1.0)};
}

inline double delta_e76(const LabColor& p, const LabColor& q) {
  const double dL = p.L - q.L;
  const double da = p.a - q.a;
  const double db = p.b - q.b;
  return std::sqrt(dL * dL + da * da + db * db);
}

}  // namespace filmgrade
