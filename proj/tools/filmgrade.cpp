// filmgrade: command-line front end for the film stylisation library.
//
// Exit status: 0 success, 1 usage error, 2 data or format error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "filmgrade/filmgrade.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "pyramid.json";


filmgrade::ImagePlane read_input(const std::string& path) {
  auto loaded = filmgrade::read_png(path);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  return std::move(loaded.image);
}

std::string band_file(std::size_t i) { return "level" + std::to_string(i) + ".png"; }

// Bands live in [-1, 1]; stored as (v + 1) / 2 in 16-bit PNGs.
filmgrade::ImagePlane encode_band(const filmgrade::ImagePlane& band) {
  filmgrade::ImagePlane out = band;
  for (float& v : out.samples()) v = (v + 1.0f) * 0.5f;
  return out;
}

filmgrade::ImagePlane decode_band(const filmgrade::ImagePlane& stored) {
  filmgrade::ImagePlane out = stored;
  for (float& v : out.samples()) v = v * 2.0f - 1.0f;
  return out;
}

int cmd_decompose(std::size_t depth, const std::string& out_dir, const std::string& input, bool crop) {
  filmgrade::ImagePlane img = read_input(input);
  if (crop) img = filmgrade::crop_to_multiple(img, std::size_t{1} << depth);
  const auto pyr = filmgrade::decompose(img, depth);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < pyr.depth(); ++i) {
    filmgrade::save_png(encode_band(pyr.levels[i]), (fs::path(out_dir) / band_file(i)).string(), 16);
  }
  filmgrade::save_png(pyr.base, (fs::path(out_dir) / "base.png").string(), 16);
  json manifest = {{"depth", depth},
                   {"height", img.height()},
                   {"width", img.width()},
                   {"channels", img.channels()},
                   {"band_encoding", "(v+1)/2, 16-bit"},
                   {"levels", json::array()}};
  for (std::size_t i = 0; i < pyr.depth(); ++i) manifest["levels"].push_back(band_file(i));
  manifest["base"] = "base.png";
  std::ofstream(fs::path(out_dir) / kManifest) << manifest.dump(2) << "\n";
  std::cout << "wrote " << depth << " bands and base to " << out_dir << "\n";
  return 0;
}

int cmd_reconstruct(const std::string& dir, const std::string& out, unsigned bit_depth) {
  const fs::path manifest_path = fs::path(dir) / kManifest;
  std::ifstream mf(manifest_path);
  if (!mf) throw filmgrade::IoError("cannot open '" + manifest_path.string() + "'");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw filmgrade::FormatError(manifest_path.string() + ": " + e.what());
  }
  filmgrade::PyramidDecomposition pyr;
  const auto depth = manifest.value("depth", std::size_t{0});
  if (depth == 0) throw filmgrade::FormatError(manifest_path.string() + ": missing depth");
  for (std::size_t i = 0; i < depth; ++i) {
    pyr.levels.push_back(decode_band(filmgrade::load_png((fs::path(dir) / band_file(i)).string())));
  }
  pyr.base = filmgrade::load_png((fs::path(dir) / "base.png").string());
  filmgrade::save_png(filmgrade::reconstruct(pyr), out, bit_depth);
  return 0;
}

int cmd_apply_lut(const std::string& lut_path, const std::string& in, const std::string& out, unsigned bit_depth) {
  const auto cube = filmgrade::read_cube(lut_path);
  for (const auto& w : cube.warnings) std::cerr << "warning: " << w << "\n";
  filmgrade::ImagePlane img = filmgrade::gray_to_rgb(read_input(in));
  img = filmgrade::normalize_to_domain(img, cube);
  filmgrade::save_png(filmgrade::clamped01(filmgrade::apply_lut(cube.lut, img)), out, bit_depth);
  return 0;
}

std::vector<filmgrade::ImagePair> read_pairs(const std::string& dir) {
  if (!fs::is_directory(dir)) throw filmgrade::IoError("'" + dir + "' is not a directory");
  std::map<std::string, fs::path> inputs, targets;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    auto strip = [&](const std::string& suffix, std::map<std::string, fs::path>& into) {
      if (name.size() > suffix.size() && name.ends_with(suffix)) {
        into[name.substr(0, name.size() - suffix.size())] = entry.path();
        return true;
      }
      return false;
    };
    if (!strip(".input.png", inputs)) strip(".target.png", targets);
  }
  std::vector<filmgrade::ImagePair> pairs;
  for (const auto& [stem, in] : inputs) {
    auto it = targets.find(stem);
    if (it == targets.end()) throw filmgrade::FormatError("pair '" + stem + "' has no .target.png");
    pairs.emplace_back(filmgrade::gray_to_rgb(read_input(in.string())),
                       filmgrade::gray_to_rgb(read_input(it->second.string())));
  }
  for (const auto& [stem, tg] : targets)
    if (!inputs.count(stem)) throw filmgrade::FormatError("pair '" + stem + "' has no .input.png");
  if (pairs.empty()) throw filmgrade::FormatError("no *.input.png / *.target.png pairs in '" + dir + "'");
  return pairs;
}

void write_trace(const std::vector<filmgrade::TraceRow>& trace, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw filmgrade::IoError("cannot write '" + path + "'");
  f << "iteration,mse,ssim,total,holdout_psnr\n";
  char line[160];
  for (const auto& r : trace) {
    std::snprintf(line, sizeof(line), "%zu,%.10g,%.10g,%.10g,", r.iteration, r.mse, r.ssim, r.total);
    f << line;
    if (!std::isnan(r.holdout_psnr)) {
      std::snprintf(line, sizeof(line), "%.10g", r.holdout_psnr);
      f << line;
    }
    f << "\n";
  }
}

int cmd_fit_lut(const std::string& pairs_dir, const filmgrade::FitConfig& cfg, const std::string& out,
                const std::string& trace_path) {
  const auto pairs = read_pairs(pairs_dir);
  std::cerr << "fitting " << cfg.bins << "^3 LUT on " << pairs.size() << " pairs, " << cfg.iterations
            << " iterations, " << filmgrade::thread_count() << " threads\n";
  filmgrade::FitResult result;
  try {
    result = filmgrade::fit_lut(pairs, cfg);
  } catch (const filmgrade::FitAborted& e) {
    if (!trace_path.empty()) write_trace(e.trace(), trace_path);
    throw;
  }
  filmgrade::write_cube(result.lut, out, "filmgrade fit");
  if (!trace_path.empty()) write_trace(result.trace, trace_path);
  const auto& last = result.trace.back();
  std::cerr << "final total " << last.total << " (mse " << last.mse << ", ssim " << last.ssim << ")\n";
  return 0;
}

int cmd_stylize(const std::string& weights_path, std::size_t depth, const std::string& in, const std::string& out,
                bool crop, unsigned bit_depth) {
  const auto wc = filmgrade::load_weights(weights_path);
  filmgrade::FilmPipelineConfig cfg = filmgrade::config_from_weights(wc);
  cfg.depth = depth;
  cfg.weights_path = weights_path;
  filmgrade::ImagePlane img = filmgrade::gray_to_rgb(read_input(in));
  if (crop) img = filmgrade::crop_to_multiple(img, std::size_t{1} << depth);
  filmgrade::save_png(filmgrade::stylize(img, cfg, wc), out, bit_depth);
  return 0;
}

int cmd_init_weights(std::uint64_t seed, const std::string& out, std::size_t bins, std::size_t basis) {
  filmgrade::FilmPipelineConfig cfg;
  cfg.lut_bins = bins;
  cfg.basis_count = basis;
  filmgrade::save_weights(filmgrade::init_weights(cfg, seed), out);
  return 0;
}

json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

int cmd_metrics(const std::string& a, const std::string& b, bool csv, bool peak255) {
  filmgrade::ImagePlane pa = read_input(a);
  filmgrade::ImagePlane pb = read_input(b);
  double peak = 1.0;
  if (peak255) {
    pa = filmgrade::scaled(pa, 255.0f);
    pb = filmgrade::scaled(pb, 255.0f);
    peak = 255.0;
  }
  const auto r = filmgrade::compute_metrics(pa, pb, peak);
  if (csv) {
    std::printf("psnr,ssim_global,ssim_windowed,delta_e_mean,delta_e_p95\n");
    std::printf("%s,%.10g,%.10g,%.10g,%.10g\n",
                std::isinf(r.psnr) ? "inf" : std::to_string(r.psnr).c_str(), r.ssim_global, r.ssim_windowed,
                r.delta_e_mean, r.delta_e_p95);
  } else {
    json j = {{"psnr", number_or_inf(r.psnr)},
              {"ssim_global", r.ssim_global},
              {"ssim_windowed", r.ssim_windowed},
              {"delta_e_mean", r.delta_e_mean},
              {"delta_e_p95", r.delta_e_p95}};
    std::cout << j.dump() << "\n";
  }
  return 0;
}

int cmd_gradcheck(const std::string& target, std::uint64_t seed, std::size_t bins) {
  filmgrade::GradCheckOptions opt;
  opt.bins = bins;
  const auto rep = filmgrade::grad_check(target, seed, opt);
  json j = {{"target", rep.target},
            {"seed", seed},
            {"max_relative_error", rep.max_relative_error},
            {"checked", rep.checked},
            {"tolerance", filmgrade::kGradCheckTolerance},
            {"passed", rep.passed}};
  std::cout << j.dump() << "\n";
  return rep.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"filmgrade - Laplacian-pyramid film stylisation and 3D LUT grading"};
  app.require_subcommand(1);
  app.footer("Exit status: 0 success, 1 usage error, 2 data/format error.\n"
             "FILMGRADE_THREADS caps worker threads; results do not depend on it.");

  unsigned bit_depth = 8;
  bool crop = false;

  auto* dec = app.add_subcommand("decompose", "Split an image into Laplacian bands and a base.");
  dec->footer("Bands are stored as 16-bit PNGs holding (v+1)/2; base.png holds the low-frequency base.\n"
              "pyramid.json in the output directory records depth and file names.");
  std::size_t dec_depth = 2;
  std::string dec_out, dec_in;
  dec->add_option("--depth", dec_depth, "Pyramid depth")->check(CLI::Range(1, 16));
  dec->add_option("--out", dec_out, "Output directory")->required();
  dec->add_flag("--crop", crop, "Crop to a multiple of 2^depth instead of failing");
  dec->add_option("input", dec_in, "Input PNG")->required();

  auto* rec = app.add_subcommand("reconstruct", "Rebuild an image from a decompose directory.");
  std::string rec_out, rec_dir;
  rec->add_option("--out", rec_out, "Output PNG")->required();
  rec->add_option("--bit-depth", bit_depth, "8 or 16")->check(CLI::IsMember({8u, 16u}));
  rec->add_option("dir", rec_dir, "Directory written by decompose")->required();

  auto* app_lut = app.add_subcommand("apply-lut", "Apply a .cube 3D LUT with trilinear interpolation.");
  std::string lut_path, lut_in, lut_out;
  app_lut->add_option("--lut", lut_path, ".cube file")->required();
  app_lut->add_option("--bit-depth", bit_depth, "8 or 16")->check(CLI::IsMember({8u, 16u}));
  app_lut->add_option("input", lut_in, "Input PNG")->required();
  app_lut->add_option("output", lut_out, "Output PNG")->required();

  auto* fit = app.add_subcommand("fit-lut", "Fit a 3D LUT to input/target pairs.");
  fit->footer("Pairs directory: NAME.input.png with matching NAME.target.png.");
  filmgrade::FitConfig fit_cfg;
  std::string pairs_dir, fit_out, trace_path, optimizer = "adam", mode = "full";
  bool literal_ssim = false;
  fit->add_option("--pairs", pairs_dir, "Directory of training pairs")->required();
  fit->add_option("--bins", fit_cfg.bins, "Lattice points per axis")->check(CLI::Range(2, 129));
  fit->add_option("--iters", fit_cfg.iterations, "Iterations")->check(CLI::PositiveNumber);
  fit->add_option("--lr", fit_cfg.step_size, "Step size")->check(CLI::PositiveNumber);
  fit->add_option("--seed", fit_cfg.seed, "Seed for holdout split and shuffling");
  fit->add_option("--holdout", fit_cfg.holdout_fraction, "Fraction of pairs held out")->check(CLI::Range(0.0, 0.99));
  fit->add_option("--smoothness", fit_cfg.smoothness_weight, "Lattice smoothness weight")->check(CLI::NonNegativeNumber);
  fit->add_option("--optimizer", optimizer, "adam or gd")->check(CLI::IsMember({"adam", "gd"}));
  fit->add_option("--mode", mode, "full (full batch) or shuffled (one update per pair)")
      ->check(CLI::IsMember({"full", "shuffled"}));
  fit->add_flag("--literal-ssim", literal_ssim, "Use mse + 0.4*ssim instead of mse + 0.4*(1-ssim)");
  fit->add_option("--out", fit_out, "Output .cube")->required();
  fit->add_option("--trace", trace_path, "Per-iteration CSV trace");

  auto* sty = app.add_subcommand("stylize", "Run the full stylisation pipeline.");
  std::string sty_weights, sty_in, sty_out;
  std::size_t sty_depth = 2;
  sty->add_option("--weights", sty_weights, "FGWC weight file")->required();
  sty->add_option("--depth", sty_depth, "Pyramid depth")->check(CLI::Range(1, 16));
  sty->add_option("--bit-depth", bit_depth, "8 or 16")->check(CLI::IsMember({8u, 16u}));
  sty->add_flag("--crop", crop, "Crop to a multiple of 2^depth instead of failing");
  sty->add_option("input", sty_in, "Input PNG")->required();
  sty->add_option("output", sty_out, "Output PNG")->required();

  auto* ini = app.add_subcommand("init-weights", "Write a seeded FGWC weight file.");
  std::uint64_t ini_seed = 0;
  std::string ini_out;
  std::size_t ini_bins = 33, ini_basis = 3;
  ini->add_option("--seed", ini_seed, "Seed")->required();
  ini->add_option("--out", ini_out, "Output .fgwc")->required();
  ini->add_option("--bins", ini_bins, "Basis LUT bins")->check(CLI::Range(2, 129));
  ini->add_option("--basis", ini_basis, "Number of basis LUTs")->check(CLI::Range(1, 16));

  auto* met = app.add_subcommand("metrics", "PSNR, SSIM (global and windowed) and delta E between two PNGs.");
  bool met_csv = false, met_255 = false;
  std::string met_a, met_b;
  met->add_flag("--csv", met_csv, "One CSV line with a header instead of JSON");
  met->add_flag("--peak-255", met_255, "Report on the 8-bit scale (peak and SSIM range 255)");
  met->add_option("a", met_a, "Prediction PNG")->required();
  met->add_option("b", met_b, "Reference PNG")->required();

  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences.");
  std::string gc_target = "lut_lattice";
  std::uint64_t gc_seed = 7;
  std::size_t gc_bins = 5;
  gc->add_option("--target", gc_target, "lut_lattice or combine_weights");
  gc->add_option("--seed", gc_seed, "Seed");
  gc->add_option("--bins", gc_bins, "Lattice points per axis")->check(CLI::Range(2, 17));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*dec) return cmd_decompose(dec_depth, dec_out, dec_in, crop);
    if (*rec) return cmd_reconstruct(rec_dir, rec_out, bit_depth);
    if (*app_lut) return cmd_apply_lut(lut_path, lut_in, lut_out, bit_depth);
    if (*fit) {
      fit_cfg.optimizer = optimizer == "gd" ? filmgrade::Optimizer::GradientDescent : filmgrade::Optimizer::Adam;
      fit_cfg.mode = mode == "shuffled" ? filmgrade::BatchMode::Shuffled : filmgrade::BatchMode::FullBatch;
      fit_cfg.term = literal_ssim ? filmgrade::SsimTerm::Literal : filmgrade::SsimTerm::Complement;
      return cmd_fit_lut(pairs_dir, fit_cfg, fit_out, trace_path);
    }
    if (*sty) return cmd_stylize(sty_weights, sty_depth, sty_in, sty_out, crop, bit_depth);
    if (*ini) return cmd_init_weights(ini_seed, ini_out, ini_bins, ini_basis);
    if (*met) return cmd_metrics(met_a, met_b, met_csv, met_255);
    if (*gc) return cmd_gradcheck(gc_target, gc_seed, gc_bins);
  } catch (const filmgrade::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const filmgrade::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
