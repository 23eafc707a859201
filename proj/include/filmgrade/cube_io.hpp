#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "filmgrade/error.hpp"
#include "filmgrade/lut.hpp"

namespace filmgrade {

// Adobe / Resolve .cube 3D LUT.
//
// Parsing rules: lines end in LF or CRLF; '#' starts a comment that runs to
// the end of the line; tokens are separated by spaces or tabs. Header
// keywords (TITLE, LUT_3D_SIZE, DOMAIN_MIN, DOMAIN_MAX, LUT_3D_INPUT_RANGE)
// precede the data; unknown keywords are skipped with a warning. Data is
// size^3 lines of three numbers with red varying fastest, then green, then
// blue. 1D LUTs are rejected.
struct CubeFile {
  Lut3D lut;
  std::string title;
  std::array<double, 3> domain_min{0.0, 0.0, 0.0};
  std::array<double, 3> domain_max{1.0, 1.0, 1.0};
  std::vector<std::string> warnings;

  bool unit_domain() const noexcept {
    return domain_min == std::array<double, 3>{0, 0, 0} && domain_max == std::array<double, 3>{1, 1, 1};
  }
};

namespace cube_detail {

inline std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double number(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError(".cube line " + std::to_string(line_no) + ": invalid number '" + std::string(tok) + "'");
  }
  return v;
}

inline bool starts_numeric(std::string_view tok) {
  const char c = tok.front();
  return (c >= '0' && c <= '9') || c == '-' || c == '+' || c == '.';
}

}  // namespace cube_detail

inline CubeFile parse_cube(std::string_view text) {
  using namespace cube_detail;
  CubeFile cube;
  std::size_t size = 0;
  std::vector<float> rows;  // file order, r fastest
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = tokens(line);
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto where = [&] { return ".cube line " + std::to_string(line_no) + ": "; };

    if (starts_numeric(tok[0])) {
      if (size == 0) throw FormatError(where() + "data before LUT_3D_SIZE");
      if (tok.size() != 3) throw FormatError(where() + "expected 3 values, got " + std::to_string(tok.size()));
      for (const auto t : tok) rows.push_back(static_cast<float>(number(t, line_no)));
    } else {
      if (!rows.empty()) throw FormatError(where() + "keyword '" + std::string(tok[0]) + "' after data");
      if (tok[0] == "TITLE") {
        const auto q0 = line.find('"');
        const auto q1 = line.rfind('"');
        cube.title = (q0 != std::string_view::npos && q1 > q0) ? std::string(line.substr(q0 + 1, q1 - q0 - 1))
                                                               : std::string(line.substr(line.find("TITLE") + 5));
      } else if (tok[0] == "LUT_3D_SIZE") {
        if (tok.size() != 2) throw FormatError(where() + "LUT_3D_SIZE needs one value");
        const double n = number(tok[1], line_no);
        if (n < 2 || n > 256 || n != static_cast<double>(static_cast<std::size_t>(n))) {
          throw FormatError(where() + "LUT_3D_SIZE out of range");
        }
        size = static_cast<std::size_t>(n);
      } else if (tok[0] == "LUT_1D_SIZE") {
        throw FormatError(where() + "1D LUTs are not supported");
      } else if (tok[0] == "DOMAIN_MIN" || tok[0] == "DOMAIN_MAX") {
        if (tok.size() != 4) throw FormatError(where() + std::string(tok[0]) + " needs three values");
        auto& dst = tok[0] == "DOMAIN_MIN" ? cube.domain_min : cube.domain_max;
        for (int c = 0; c < 3; ++c) dst[c] = number(tok[c + 1], line_no);
      } else if (tok[0] == "LUT_3D_INPUT_RANGE") {
        if (tok.size() != 3) throw FormatError(where() + "LUT_3D_INPUT_RANGE needs two values");
        cube.domain_min.fill(number(tok[1], line_no));
        cube.domain_max.fill(number(tok[2], line_no));
      } else {
        cube.warnings.push_back(where() + "ignored keyword '" + std::string(tok[0]) + "'");
      }
    }
    if (end == text.size()) break;
  }
  if (size == 0) throw FormatError(".cube: missing LUT_3D_SIZE");
  for (int c = 0; c < 3; ++c)
    if (!(cube.domain_max[c] > cube.domain_min[c])) throw FormatError(".cube: empty domain");
  const std::size_t expected = size * size * size * 3;
  if (rows.size() != expected) {
    throw FormatError(".cube: expected " + std::to_string(expected / 3) + " entries, got " +
                      std::to_string(rows.size() / 3));
  }
  Lut3D lut(size);
  std::size_t i = 0;
  for (std::size_t b = 0; b < size; ++b)
    for (std::size_t g = 0; g < size; ++g)
      for (std::size_t r = 0; r < size; ++r, i += 3) {
        float* e = lut.entry(r, g, b);
        e[0] = rows[i];
        e[1] = rows[i + 1];
        e[2] = rows[i + 2];
      }
  cube.lut = std::move(lut);
  return cube;
}

inline CubeFile read_cube(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_cube(ss.str());
}

// Six decimals per value, red fastest.
inline std::string format_cube(const Lut3D& lut, const std::string& title = "filmgrade") {
  std::string out;
  out.reserve(lut.entry_count() * 30 + 128);
  out += "TITLE \"" + title + "\"\n";
  out += "LUT_3D_SIZE " + std::to_string(lut.bins()) + "\n";
  out += "DOMAIN_MIN 0.0 0.0 0.0\nDOMAIN_MAX 1.0 1.0 1.0\n";
  char line[96];
  const std::size_t n = lut.bins();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t g = 0; g < n; ++g)
      for (std::size_t r = 0; r < n; ++r) {
        const float* e = lut.entry(r, g, b);
        std::snprintf(line, sizeof(line), "%.6f %.6f %.6f\n", e[0], e[1], e[2]);
        out += line;
      }
  return out;
}

inline void write_cube(const Lut3D& lut, const std::string& path, const std::string& title = "filmgrade") {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << format_cube(lut, title);
  if (!f) throw IoError("write failed for '" + path + "'");
}

// Maps colours from the file's input domain onto [0,1] so apply_lut can be
// used unchanged.
inline ImagePlane normalize_to_domain(const ImagePlane& img, const CubeFile& cube) {
  require_rgb(img, "normalize_to_domain");
  if (cube.unit_domain()) return img;
  ImagePlane out = img;
  for (std::size_t y = 0; y < img.height(); ++y)
    for (std::size_t x = 0; x < img.width(); ++x) {
      float* p = out.pixel(y, x);
      for (int c = 0; c < 3; ++c)
        p[c] = static_cast<float>((p[c] - cube.domain_min[c]) / (cube.domain_max[c] - cube.domain_min[c]));
    }
  return out;
}

}  // namespace filmgrade
