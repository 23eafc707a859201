#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "filmgrade/fit.hpp"
#include "filmgrade/pipeline.hpp"
#include "test_support.hpp"

namespace fg = filmgrade;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("filmgrade_pipeline_" + name)).string();
}

void set_threads(const char* v) { setenv("FILMGRADE_THREADS", v, 1); }

}  // namespace

TEST(Pipeline, IdentityWeightsReproduceInput) {
  const fg::FilmPipelineConfig cfg;
  const auto wc = fg::identity_weights(cfg);
  for (std::uint64_t seed : {1u, 2u}) {
    fg::SplitMix64 rng(seed);
    const auto img = fg::random_image(256, 256, 3, rng);
    EXPECT_LT(fg::max_abs_difference(fg::stylize(img, cfg, wc), img), 1e-5f) << seed;
  }
}

TEST(Pipeline, ZeroMaskLeavesOnlyTheUpsampledBase) {
  fg::FilmPipelineConfig cfg;
  cfg.depth = 3;
  auto wc = fg::identity_weights(cfg);
  wc.mutable_tensor("mask.conv2.bias").values[0] = 0.0f;
  fg::SplitMix64 rng(3);
  const auto img = fg::random_image(64, 64, 3, rng);
  fg::StylizeTrace trace;
  fg::stylize(img, cfg, wc, &trace);
  for (const auto& band : trace.refined_levels)
    for (float v : band.samples()) EXPECT_EQ(v, 0.0f);
  fg::ImagePlane expect = trace.input_pyramid.base;
  for (int i = 0; i < 3; ++i) expect = fg::pyr_up(expect);
  EXPECT_LT(fg::max_abs_difference(trace.recombined, expect), 1e-6f);
}

TEST(Pipeline, TraceRecordsStages) {
  const fg::FilmPipelineConfig cfg;
  const auto wc = fg::init_weights(cfg, 5);
  const auto img = fg::testing::textured_image(64, 64, 6);
  fg::StylizeTrace trace;
  const auto out = fg::stylize(img, cfg, wc, &trace);
  EXPECT_EQ(trace.input_pyramid.depth(), cfg.depth);
  EXPECT_EQ(trace.refined_base.height(), 16u);
  EXPECT_EQ(trace.coarse_mask.channels(), 1u);
  EXPECT_EQ(trace.coarse_mask.height(), 32u);
  ASSERT_EQ(trace.blend_weights.size(), 3u);
  EXPECT_EQ(trace.blend_weights[0], 1.0);
  EXPECT_EQ(out.height(), 64u);
  EXPECT_EQ(out.channels(), 3u);
}

TEST(Pipeline, FreshWeightsLeaveTheRegulatorAtIdentity) {
  const fg::FilmPipelineConfig cfg;
  const auto wc = fg::init_weights(cfg, 13);
  const auto img = fg::testing::textured_image(64, 64, 14);
  fg::StylizeTrace trace;
  const auto out = fg::stylize(img, cfg, wc, &trace);
  EXPECT_EQ(trace.blend_weights, (std::vector<double>{1.0, 0.0, 0.0}));
  EXPECT_LE(fg::max_abs_difference(out, fg::clamped01(trace.recombined)), 1e-6f);
}

TEST(Pipeline, SeededOutputIsInRangeAndStable) {
  const fg::FilmPipelineConfig cfg;
  const auto wc = fg::init_weights(cfg, 42);
  const auto img = fg::testing::textured_image(256, 256, 9);
  const auto out = fg::stylize(img, cfg, wc);
  for (float v : out.samples()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_GT(fg::max_abs_difference(out, img), 1e-3f);
  EXPECT_EQ(fg::testing::image_hash(out), 0x3d22f5c6c7e7f718ULL);
}

TEST(Pipeline, ThreadCountDoesNotChangeOutput) {
  const char* old = std::getenv("FILMGRADE_THREADS");
  const std::string saved = old ? old : "";
  const fg::FilmPipelineConfig cfg;
  const auto wc = fg::init_weights(cfg, 11);
  const auto img = fg::testing::textured_image(128, 128, 12);
  set_threads("1");
  const auto one = fg::stylize(img, cfg, wc);
  set_threads("4");
  const auto four = fg::stylize(img, cfg, wc);
  if (old) set_threads(saved.c_str());
  else unsetenv("FILMGRADE_THREADS");
  EXPECT_EQ(one, four);
}

TEST(Pipeline, InputValidation) {
  const fg::FilmPipelineConfig cfg;
  const auto wc = fg::identity_weights(cfg);
  EXPECT_THROW(fg::stylize(fg::ImagePlane(64, 64, 1), cfg, wc), fg::InvalidArgument);
  EXPECT_THROW(fg::stylize(fg::ImagePlane(30, 64, 3), cfg, wc), fg::InvalidArgument);
  fg::FilmPipelineConfig bad = cfg;
  bad.nsr_input_size = 130;
  EXPECT_THROW(bad.validate(), fg::InvalidArgument);
  bad = cfg;
  bad.lut_bins = 17;
  EXPECT_THROW(fg::validate_weights(wc, bad), fg::Error);
}

TEST(Weights, InitIsDeterministicPerSeed) {
  const fg::FilmPipelineConfig cfg;
  EXPECT_EQ(fg::init_weights(cfg, 7), fg::init_weights(cfg, 7));
  EXPECT_NE(fg::init_weights(cfg, 7), fg::init_weights(cfg, 8));
  const auto wc = fg::init_weights(cfg, 7);
  EXPECT_NO_THROW(fg::validate_weights(wc, cfg));
  EXPECT_EQ(wc.size(), fg::required_tensor_specs(cfg).size());
}

TEST(Weights, ConfigFromHeader) {
  fg::FilmPipelineConfig cfg;
  cfg.lut_bins = 9;
  cfg.basis_count = 2;
  cfg.nsr.width = 8;
  cfg.nsr_input_size = 64;
  const auto back = fg::config_from_weights(fg::init_weights(cfg, 1));
  EXPECT_EQ(back.lut_bins, 9u);
  EXPECT_EQ(back.basis_count, 2u);
  EXPECT_EQ(back.nsr.width, 8u);
  EXPECT_EQ(back.nsr_input_size, 64u);
  EXPECT_EQ(fg::arch_header(back), fg::arch_header(cfg));
}

TEST(Weights, FileRoundTripIsBitwise) {
  const auto wc = fg::init_weights(fg::FilmPipelineConfig{}, 21);
  const auto path = temp_path("roundtrip.fgwc");
  fg::save_weights(wc, path);
  const auto back = fg::load_weights(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back, wc);
  EXPECT_EQ(fg::encode_weights(back), fg::encode_weights(wc));
}

TEST(Weights, EncodingLayout) {
  fg::WeightContainer wc;
  wc.set("a", {2}, {1.0f, -2.0f});
  const auto bytes = fg::encode_weights(wc);
  const std::vector<unsigned char> expect{'F', 'G', 'W', 'C', 1, 0, 0, 0, 1, 0, 0, 0,  // header
                                          1, 0, 'a', 0, 1, 2, 0, 0, 0,               // name, dtype, rank, dims
                                          0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0};          // 1.0f, -2.0f
  EXPECT_EQ(bytes, expect);
}

TEST(Weights, TruncationNamesTheOffset) {
  auto bytes = fg::encode_weights(fg::init_weights(fg::FilmPipelineConfig{}, 3));
  bytes.resize(bytes.size() - 5);
  try {
    fg::decode_weights(bytes);
    FAIL() << "expected FormatError";
  } catch (const fg::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  bytes.resize(10);
  EXPECT_THROW(fg::decode_weights(bytes), fg::FormatError);
}

TEST(Weights, BadMagicVersionAndTrailingBytes) {
  fg::WeightContainer wc;
  wc.set("x", {1}, {0.5f});
  auto bytes = fg::encode_weights(wc);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(fg::decode_weights(bad), fg::FormatError);
  bad = bytes;
  bad[4] = 2;
  try {
    fg::decode_weights(bad);
    FAIL() << "expected FormatError";
  } catch (const fg::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 2"), std::string::npos) << e.what();
  }
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(fg::decode_weights(bad), fg::FormatError);
  EXPECT_THROW(fg::load_weights(temp_path("does_not_exist.fgwc")), fg::IoError);
}

TEST(Weights, MissingTensorIsNamed) {
  const fg::FilmPipelineConfig cfg;
  auto wc = fg::init_weights(cfg, 4);
  wc.erase("mask.conv1.kernel");
  try {
    fg::validate_weights(wc, cfg);
    FAIL() << "expected MissingTensorError";
  } catch (const fg::MissingTensorError& e) {
    EXPECT_EQ(e.tensor_name(), "mask.conv1.kernel");
  }
}

TEST(Weights, ShapeMismatchIsFormatError) {
  const fg::FilmPipelineConfig cfg;
  auto wc = fg::init_weights(cfg, 4);
  wc.set("ttr.basis0", {5, 5, 5, 3}, std::vector<float>(375, 0.0f));
  EXPECT_THROW(fg::validate_weights(wc, cfg), fg::FormatError);
  EXPECT_THROW(wc.set("bad", {2, 2}, {1.0f}), fg::InvalidArgument);
}
