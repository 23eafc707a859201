#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "filmgrade/cube_io.hpp"
#include "filmgrade/fit.hpp"
#include "filmgrade/png_io.hpp"
#include "lut_recovery.hpp"
#include "test_support.hpp"

namespace fg = filmgrade;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + FILMGRADE_CLI + std::string(" ") + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (std::size_t n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("filmgrade_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").status, 1);
  EXPECT_EQ(run("no-such-command").status, 1);
  EXPECT_EQ(run("decompose").status, 1);
  EXPECT_EQ(run("fit-lut --pairs x --out y --optimizer sgd").status, 1);
  EXPECT_EQ(run("--help").status, 0);
}

TEST_F(Cli, HelpDocumentsExitCodesAndBandEncoding) {
  EXPECT_NE(run("--help").out.find("1 usage error, 2 data/format error"), std::string::npos);
  EXPECT_NE(run("decompose --help").out.find("(v+1)/2"), std::string::npos);
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run("metrics " + path("missing.png") + " " + path("missing.png")).status, 2);
  std::ofstream(path("junk.png")) << "not a png";
  EXPECT_EQ(run("decompose " + path("junk.png") + " --out " + path("d")).status, 2);
  fg::save_png(fg::ImagePlane(30, 32, 3, 0.5f), path("odd.png"));
  const auto r = run("decompose " + path("odd.png") + " --depth 2 --out " + path("d"));
  EXPECT_EQ(r.status, 2) << r.out;
  std::ofstream(path("bad.fgwc")) << "FGWX";
  EXPECT_EQ(run("stylize " + path("odd.png") + " " + path("o.png") + " --weights " + path("bad.fgwc")).status, 2);
}

TEST_F(Cli, DecomposeReconstructRoundTrip) {
  fg::save_png(fg::testing::textured_image(64, 48, 1), path("in.png"), 16);
  auto r = run("decompose " + path("in.png") + " --depth 3 --out " + path("pyr"));
  ASSERT_EQ(r.status, 0) << r.out;
  for (const char* f : {"level0.png", "level1.png", "level2.png", "base.png", "pyramid.json"})
    EXPECT_TRUE(fs::exists(dir_ / "pyr" / f)) << f;
  const auto band = fg::read_png(path("pyr/level0.png"));
  EXPECT_EQ(band.bit_depth, 16u);
  EXPECT_NE(slurp(dir_ / "pyr" / "pyramid.json").find("\"depth\": 3"), std::string::npos);
  r = run("reconstruct " + path("pyr") + " --out " + path("back.png") + " --bit-depth 16");
  ASSERT_EQ(r.status, 0) << r.out;
  const auto in = fg::load_png(path("in.png"));
  // Each band carries up to one 16-bit step of error; base and output add half a step each.
  EXPECT_LE(fg::max_abs_difference(fg::load_png(path("back.png")), in), 4.0f / 65535.0f);
}

TEST_F(Cli, DecomposeCrop) {
  fg::save_png(fg::testing::textured_image(30, 35, 2), path("odd.png"));
  const auto r = run("decompose " + path("odd.png") + " --depth 2 --crop --out " + path("pyr"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto level0 = fg::load_png(path("pyr/level0.png"));
  EXPECT_EQ(level0.height(), 28u);
  EXPECT_EQ(level0.width(), 32u);
}

TEST_F(Cli, ApplyIdentityLut) {
  fg::save_png(fg::testing::textured_image(16, 16, 3), path("in.png"));
  fg::write_cube(fg::identity_lut(33), path("id.cube"));
  const auto r = run("apply-lut " + path("in.png") + " " + path("out.png") + " --lut " + path("id.cube"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(fg::load_png(path("out.png")), fg::load_png(path("in.png")));
}

TEST_F(Cli, ApplyThirdPartyCube) {
  fg::save_png(fg::testing::textured_image(16, 16, 4), path("in.png"));
  const auto r = run("apply-lut " + path("in.png") + " " + path("out.png") + " --lut " FILMGRADE_TEST_DATA
                     "/colour_science_5.cube");
  EXPECT_EQ(r.status, 0) << r.out;
}

TEST_F(Cli, MetricsJsonAndCsv) {
  const fg::ImagePlane a(16, 16, 3, 100.0f / 255.0f), b(16, 16, 3, 101.0f / 255.0f);
  fg::save_png(a, path("a.png"));
  fg::save_png(b, path("b.png"));
  auto r = run("metrics " + path("a.png") + " " + path("b.png") + " --peak-255");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("\"psnr\":48.130"), std::string::npos) << r.out;
  r = run("metrics " + path("a.png") + " " + path("a.png"));
  EXPECT_NE(r.out.find("\"psnr\":\"inf\""), std::string::npos) << r.out;
  r = run("metrics " + path("a.png") + " " + path("b.png") + " --csv");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "psnr,ssim_global,ssim_windowed,delta_e_mean,delta_e_p95");
  EXPECT_EQ(run("metrics " + path("a.png") + " " + path("b.png") + " --peak-255 --csv").status, 0);
}

TEST_F(Cli, InitWeightsAndStylize) {
  fg::save_png(fg::testing::textured_image(64, 64, 5), path("in.png"));
  ASSERT_EQ(run("init-weights --seed 3 --out " + path("w.fgwc")).status, 0);
  ASSERT_EQ(run("init-weights --seed 3 --out " + path("w2.fgwc")).status, 0);
  EXPECT_EQ(slurp(dir_ / "w.fgwc"), slurp(dir_ / "w2.fgwc"));
  auto r = run("stylize " + path("in.png") + " " + path("o1.png") + " --weights " + path("w.fgwc"),
               "FILMGRADE_THREADS=1");
  ASSERT_EQ(r.status, 0) << r.out;
  r = run("stylize " + path("in.png") + " " + path("o4.png") + " --weights " + path("w.fgwc"), "FILMGRADE_THREADS=4");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(slurp(dir_ / "o1.png"), slurp(dir_ / "o4.png"));
}

TEST_F(Cli, FitLutWritesCubeAndTrace) {
  fs::create_directories(dir_ / "pairs");
  const auto truth = fg::testing::smooth_random_lut(5, 1, 0.1);
  for (int i = 0; i < 5; ++i) {
    const auto in = fg::testing::noise_and_gradient_image(16, 16, 40 + i);
    const std::string stem = path("pairs/p" + std::to_string(i));
    fg::save_png(in, stem + ".input.png", 16);
    fg::save_png(fg::apply_lut(truth, in), stem + ".target.png", 16);
  }
  const std::string base = "fit-lut --pairs " + path("pairs") + " --bins 5 --iters 30 --lr 0.005 --holdout 0.2 ";
  auto r = run(base + "--out " + path("a.cube") + " --trace " + path("a.csv"), "FILMGRADE_THREADS=1");
  ASSERT_EQ(r.status, 0) << r.out;
  r = run(base + "--out " + path("b.cube") + " --trace " + path("b.csv"), "FILMGRADE_THREADS=4");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_EQ(slurp(dir_ / "a.cube"), slurp(dir_ / "b.cube"));
  EXPECT_EQ(slurp(dir_ / "a.csv"), slurp(dir_ / "b.csv"));
  const auto csv = slurp(dir_ / "a.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,mse,ssim,total,holdout_psnr");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
  EXPECT_EQ(fg::read_cube(path("a.cube")).lut.bins(), 5u);
}

TEST_F(Cli, FitLutWithoutPairsIsDataError) {
  fs::create_directories(dir_ / "empty");
  EXPECT_EQ(run("fit-lut --pairs " + path("empty") + " --out " + path("x.cube")).status, 2);
}

TEST_F(Cli, GradcheckPasses) {
  auto r = run("gradcheck --bins 5 --seed 2");
  EXPECT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("\"passed\":true"), std::string::npos) << r.out;
  r = run("gradcheck --target combine_weights --seed 2");
  EXPECT_EQ(r.status, 0) << r.out;
}
