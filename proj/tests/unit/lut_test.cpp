#include <gtest/gtest.h>

#include <filesystem>

#include "filmgrade/cube_io.hpp"
#include "filmgrade/fit.hpp"
#include "filmgrade/lut.hpp"
#include "test_support.hpp"

namespace fg = filmgrade;
namespace fs = std::filesystem;

namespace {

fg::Lut3D random_lut(std::size_t bins, fg::SplitMix64& rng, double lo = -0.2, double hi = 1.2) {
  fg::Lut3D lut(bins);
  for (float& v : lut.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return lut;
}

// Independent trilinear oracle: locate the cell, then sum the eight corners
// in corner order n = 4*dr + 2*dg + db with double accumulation.
std::array<double, 3> oracle(const fg::Lut3D& lut, double r, double g, double b) {
  const std::size_t n = lut.bins();
  const double v[3] = {r, g, b};
  std::size_t i[3];
  double f[3];
  for (int c = 0; c < 3; ++c) {
    const double x = std::min(std::max(v[c], 0.0), 1.0) * static_cast<double>(n - 1);
    std::size_t k = static_cast<std::size_t>(x);
    if (k > n - 2) k = n - 2;
    i[c] = k;
    f[c] = x - static_cast<double>(k);
  }
  std::array<double, 3> out{0, 0, 0};
  for (int dr = 0; dr < 2; ++dr)
    for (int dg = 0; dg < 2; ++dg)
      for (int db = 0; db < 2; ++db) {
        const double w = (dr ? f[0] : 1 - f[0]) * (dg ? f[1] : 1 - f[1]) * (db ? f[2] : 1 - f[2]);
        const float* e = lut.entry(i[0] + dr, i[1] + dg, i[2] + db);
        for (int c = 0; c < 3; ++c) out[c] += w * static_cast<double>(e[c]);
      }
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("filmgrade_lut_test_" + name);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Lut, IdentityLattice) {
  const auto two = fg::identity_lut(2);
  for (int r = 0; r < 2; ++r)
    for (int g = 0; g < 2; ++g)
      for (int b = 0; b < 2; ++b) {
        const float* e = two.entry(r, g, b);
        EXPECT_EQ(e[0], r);
        EXPECT_EQ(e[1], g);
        EXPECT_EQ(e[2], b);
      }
  const auto big = fg::identity_lut(33);
  const float* mid = big.entry(16, 16, 16);
  EXPECT_EQ(mid[0], 0.5f);
  EXPECT_EQ(mid[1], 0.5f);
  EXPECT_EQ(mid[2], 0.5f);
  EXPECT_THROW(fg::identity_lut(1), fg::InvalidArgument);
}

TEST(Lut, IdentityApplicationIsExact) {
  fg::SplitMix64 rng(41);
  const auto img = fg::random_image(32, 32, 3, rng);
  for (std::size_t bins : {2u, 5u, 17u, 33u}) {
    EXPECT_LE(fg::max_abs_difference(fg::apply_lut(fg::identity_lut(bins), img), img), 1e-6f) << bins;
  }
}

TEST(Lut, ConstantLattice) {
  fg::Lut3D lut(4);
  for (std::size_t i = 0; i < lut.entry_count(); ++i) {
    lut.values()[3 * i] = 0.1f;
    lut.values()[3 * i + 1] = 0.7f;
    lut.values()[3 * i + 2] = -0.3f;
  }
  fg::SplitMix64 rng(42);
  const auto out = fg::apply_lut(lut, fg::random_image(5, 5, 3, rng));
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    EXPECT_NEAR(out.samples()[3 * p], 0.1f, 1e-6f);
    EXPECT_NEAR(out.samples()[3 * p + 1], 0.7f, 1e-6f);
    EXPECT_NEAR(out.samples()[3 * p + 2], -0.3f, 1e-6f);
  }
}

TEST(Lut, CentreOfTwoBinLatticeAveragesCorners) {
  auto lut = fg::identity_lut(2);
  float* last = lut.entry(1, 1, 1);
  last[0] = last[1] = last[2] = 0.0f;
  // Corners sum to (3, 3, 3) after zeroing (1,1,1); each weight is 1/8.
  const auto v = fg::lookup(lut, 0.5, 0.5, 0.5);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(v[c], 3.0 / 8.0);
}

TEST(Lut, MatchesEightCornerOracleExactly) {
  fg::SplitMix64 rng(43);
  for (std::size_t bins : {2u, 5u, 33u}) {
    const auto lut = random_lut(bins, rng);
    for (int i = 0; i < 2000; ++i) {
      const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
      EXPECT_EQ(fg::lookup(lut, r, g, b), oracle(lut, r, g, b));
    }
    const auto hi = fg::lookup(lut, 1.0, 1.0, 1.0);
    const float* e = lut.entry(bins - 1, bins - 1, bins - 1);
    for (int c = 0; c < 3; ++c) EXPECT_EQ(hi[c], e[c]);
  }
}

TEST(Lut, InputsAreClampedOutputsAreNot) {
  fg::SplitMix64 rng(44);
  const auto lut = random_lut(5, rng, -1.0, 2.0);
  EXPECT_EQ(fg::lookup(lut, -0.5, 1.5, 0.3), fg::lookup(lut, 0.0, 1.0, 0.3));
  fg::ImagePlane img(1, 1, 3, std::vector<float>{0.0f, 0.0f, 0.0f});
  const float* e = lut.entry(0, 0, 0);
  EXPECT_EQ(fg::apply_lut(lut, img).at(0, 0, 0), e[0]);
}

TEST(Lut, NodeExactInputsReturnEntries) {
  fg::SplitMix64 rng(45);
  // Spacings 1/(bins-1) that are powers of two are exact in float.
  for (std::size_t bins : {2u, 3u, 5u, 9u, 17u, 33u}) {
    const auto lut = random_lut(bins, rng);
    for (int t = 0; t < 50; ++t) {
      const std::size_t i = rng.below(bins), j = rng.below(bins), k = rng.below(bins);
      const double s = 1.0 / static_cast<double>(bins - 1);
      const auto v = fg::lookup(lut, static_cast<float>(i * s), static_cast<float>(j * s), static_cast<float>(k * s));
      const float* e = lut.entry(i, j, k);
      for (int c = 0; c < 3; ++c) EXPECT_EQ(static_cast<float>(v[c]), e[c]);
    }
  }
}

TEST(Lut, LipschitzBound) {
  fg::SplitMix64 rng(46);
  const std::size_t bins = 9;
  const auto lut = random_lut(bins, rng);
  double max_adj = 0.0;
  for (std::size_t r = 0; r < bins; ++r)
    for (std::size_t g = 0; g < bins; ++g)
      for (std::size_t b = 0; b < bins; ++b)
        for (int axis = 0; axis < 3; ++axis) {
          std::size_t n[3] = {r, g, b};
          if (++n[axis] >= bins) continue;
          for (int c = 0; c < 3; ++c)
            max_adj = std::max(max_adj, std::abs(static_cast<double>(lut.entry(n[0], n[1], n[2])[c]) -
                                                 lut.entry(r, g, b)[c]));
        }
  const double eps = 1e-3;
  for (int t = 0; t < 500; ++t) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const auto a = fg::lookup(lut, r, g, b);
    const auto p = fg::lookup(lut, r + eps, g, b);
    for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(p[c] - a[c]), eps * (bins - 1) * max_adj + 1e-12);
  }
}

TEST(CombineLuts, WeightsAndLinearity) {
  fg::SplitMix64 rng(47);
  std::vector<fg::Lut3D> basis{random_lut(5, rng), random_lut(5, rng), random_lut(5, rng)};
  EXPECT_EQ(fg::combine_luts(basis, {1.0, 0.0, 0.0}), basis[0]);
  std::vector<fg::Lut3D> twins{basis[1], basis[1]};
  const auto half = fg::combine_luts(twins, {0.5, 0.5});
  for (std::size_t i = 0; i < half.values().size(); ++i) EXPECT_FLOAT_EQ(half.values()[i], basis[1].values()[i]);
  std::vector<fg::Lut3D> pair{basis[0], basis[2]};
  const auto mix = fg::combine_luts(pair, {0.3, 0.7});
  for (std::size_t i = 0; i < mix.values().size(); ++i) {
    EXPECT_EQ(mix.values()[i], static_cast<float>(0.3 * basis[0].values()[i] + 0.7 * basis[2].values()[i]));
  }
  // Linear in the weights and, through interpolation, in the lattice.
  const std::vector<double> w{0.2, -0.5, 1.1};
  const auto img = fg::random_image(6, 6, 3, rng);
  const auto fused = fg::apply_lut(fg::combine_luts(basis, w), img);
  for (std::size_t s = 0; s < img.size(); ++s) {
    double expect = 0.0;
    for (std::size_t k = 0; k < 3; ++k) expect += w[k] * fg::apply_lut(basis[k], img).samples()[s];
    EXPECT_NEAR(fused.samples()[s], expect, 1e-5);
  }
  EXPECT_THROW(fg::combine_luts(basis, {1.0, 0.0}), fg::InvalidArgument);
  std::vector<fg::Lut3D> mixed{random_lut(5, rng), random_lut(4, rng)};
  EXPECT_THROW(fg::combine_luts(mixed, {0.5, 0.5}), fg::InvalidArgument);
  EXPECT_THROW(fg::combine_luts(std::vector<fg::Lut3D>{}, std::vector<double>{}), fg::InvalidArgument);
}

TEST(Adjuster, HeadBiasControlsWeights) {
  fg::WeightContainer wc;
  const fg::AdjusterArch arch{};
  fg::zero_graph(wc, fg::adjuster_graph(arch));
  wc.mutable_tensor("adjuster.head.bias").values = {1.0f, 0.0f, 0.0f};
  const auto img = fg::testing::textured_image(64, 64, 3);
  EXPECT_EQ(fg::adjuster_forward(img, wc, arch), (std::vector<double>{1.0, 0.0, 0.0}));
  wc.mutable_tensor("adjuster.head.bias").values = {1.0f / 3, 1.0f / 3, 1.0f / 3};
  for (double w : fg::adjuster_forward(img, wc, arch)) EXPECT_FLOAT_EQ(static_cast<float>(w), 1.0f / 3);
}

TEST(Adjuster, SeededSnapshot) {
  fg::WeightContainer wc;
  fg::init_graph(wc, fg::adjuster_graph(), 77);
  const auto w = fg::adjuster_forward(fg::testing::textured_image(64, 64, 4), wc);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(static_cast<float>(w[0]), 0.00285954354f);
  EXPECT_EQ(static_cast<float>(w[1]), -0.112172626f);
  EXPECT_EQ(static_cast<float>(w[2]), -0.101458453f);
}

TEST(Ttr, IdentityBlackAndComposition) {
  fg::WeightContainer wc;
  const fg::AdjusterArch arch{};
  fg::zero_graph(wc, fg::adjuster_graph(arch));
  wc.mutable_tensor("adjuster.head.bias").values = {1.0f, 0.0f, 0.0f};
  const auto img = fg::testing::textured_image(32, 48, 5);
  std::vector<fg::Lut3D> ident(3, fg::identity_lut(17));
  EXPECT_LE(fg::max_abs_difference(fg::ttr_apply(img, ident, wc, arch), img), 1e-6f);
  std::vector<fg::Lut3D> black(3, fg::Lut3D(5));
  for (float v : fg::testing::values(fg::ttr_apply(img, black, wc, arch))) EXPECT_EQ(v, 0.0f);

  fg::init_graph(wc, fg::adjuster_graph(arch), 3);
  fg::SplitMix64 rng(48);
  std::vector<fg::Lut3D> basis{random_lut(9, rng), random_lut(9, rng), random_lut(9, rng)};
  const auto w = fg::adjuster_forward(fg::resize_bilinear(img, 64, 64), wc, arch);
  const auto manual = fg::clamped01(fg::apply_lut(fg::combine_luts(basis, w), img));
  EXPECT_EQ(fg::ttr_apply(img, basis, wc, arch), manual);
}

TEST(Cube, RoundTripSixDecimals) {
  fg::SplitMix64 rng(49);
  const auto lut = random_lut(33, rng);
  const auto parsed = fg::parse_cube(fg::format_cube(lut, "rt"));
  EXPECT_EQ(parsed.title, "rt");
  EXPECT_TRUE(parsed.unit_domain());
  EXPECT_TRUE(parsed.warnings.empty());
  ASSERT_EQ(parsed.lut.bins(), 33u);
  for (std::size_t i = 0; i < lut.values().size(); ++i)
    EXPECT_NEAR(parsed.lut.values()[i], lut.values()[i], 5e-7 + 1e-7);
  const auto dir = temp_dir("rt");
  fg::write_cube(lut, (dir / "a.cube").string());
  EXPECT_EQ(fg::read_cube((dir / "a.cube").string()).lut, parsed.lut);
}

TEST(Cube, RedVariesFastest) {
  auto lut = fg::identity_lut(2);
  const std::string text = fg::format_cube(lut);
  EXPECT_NE(text.find("0.000000 0.000000 0.000000\n1.000000 0.000000 0.000000\n0.000000 1.000000 0.000000\n"),
            std::string::npos);
}

// Written by colour-science 0.4.6: Rec.709 luma of the identity mapped to a
// sepia tone.
TEST(Cube, ParsesThirdPartyExport) {
  const auto cube = fg::read_cube(std::string(FILMGRADE_TEST_DATA) + "/colour_science_5.cube");
  EXPECT_EQ(cube.title, "colour science sepia probe");
  ASSERT_EQ(cube.lut.bins(), 5u);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t g = 0; g < 5; ++g)
      for (std::size_t b = 0; b < 5; ++b) {
        const double R = r / 4.0, G = g / 4.0, B = b / 4.0;
        const double lum = 0.2126 * R + 0.7152 * G + 0.0722 * B;
        const float* e = cube.lut.entry(r, g, b);
        EXPECT_NEAR(e[0], lum * 1.07, 1e-6);
        EXPECT_NEAR(e[1], lum * 0.74 + 0.1 * G, 1e-6);
        EXPECT_NEAR(e[2], lum * 0.43 + 0.05, 1e-6);
      }
}

TEST(Cube, CrlfTabsCommentsAndDomain) {
  const auto cube = fg::read_cube(std::string(FILMGRADE_TEST_DATA) + "/handmade_crlf_domain.cube");
  EXPECT_EQ(cube.title, "crlf domain probe");
  EXPECT_FALSE(cube.unit_domain());
  EXPECT_EQ(cube.domain_max[1], 2.0);
  EXPECT_EQ(cube.warnings.size(), 1u);
  EXPECT_EQ(cube.lut, fg::identity_lut(2));
  fg::ImagePlane img(1, 1, 3, std::vector<float>{2.0f, 1.0f, 0.5f});
  const auto out = fg::apply_lut(cube.lut, fg::normalize_to_domain(img, cube));
  EXPECT_FLOAT_EQ(out.at(0, 0, 0), 1.0f);
  EXPECT_FLOAT_EQ(out.at(0, 0, 1), 0.5f);
  EXPECT_FLOAT_EQ(out.at(0, 0, 2), 0.25f);
}

TEST(Cube, Errors) {
  EXPECT_THROW(fg::parse_cube("TITLE \"x\"\n"), fg::FormatError);
  EXPECT_THROW(fg::parse_cube("LUT_1D_SIZE 4\n0 0 0\n"), fg::FormatError);
  EXPECT_THROW(fg::parse_cube("LUT_3D_SIZE 2\n0 0 0\n"), fg::FormatError);
  EXPECT_THROW(fg::parse_cube("0 0 0\nLUT_3D_SIZE 2\n"), fg::FormatError);
  EXPECT_THROW(fg::parse_cube("LUT_3D_SIZE 2\n0 0\n"), fg::FormatError);
  EXPECT_THROW(fg::parse_cube("LUT_3D_SIZE 2\n0 0 x\n"), fg::FormatError);
  std::string text = "LUT_3D_SIZE 2\n";
  for (int i = 0; i < 8; ++i) text += "0 0 0\n";
  EXPECT_NO_THROW(fg::parse_cube(text));
  EXPECT_THROW(fg::parse_cube(text + "TITLE \"late\"\n"), fg::FormatError);
  EXPECT_THROW(fg::read_cube("/nonexistent/file.cube"), fg::IoError);
}
