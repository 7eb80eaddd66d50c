// cspat: compressed-sensing photoacoustic tomography pipeline.
//
// Subcommands: simulate | subsample | reconstruct | evaluate | mip | pipeline
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "cspat/datagen.hpp"
#include "cspat/io.hpp"
#include "cspat/recon.hpp"
#include "cspat/sensing.hpp"
#include "cspat/wave.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cspat;

namespace {

struct GlobalArgs {
  std::string config;
  std::optional<uint64_t> seed;
  bool deterministic = false;
  int threads = 1;
  std::string dtype = "f64";
};

Dtype parse_dtype(const std::string& s) {
  if (s == "f64") return Dtype::f64;
  if (s == "f32") return Dtype::f32;
  throw ValidationError("--dtype must be f32 or f64");
}

int run_simulate(const GlobalArgs& g, const std::string& out_dir) {
  json config = io::load_config(g.config);
  // simulate is the pipeline without the reconstruction stage
  config.erase("reconstruction");
  auto outcome = io::run_pipeline(config, out_dir, g.seed);
  std::cout << "simulate: wrote " << outcome.artifacts.size() << " artifacts to " << out_dir
            << "\n";
  return 0;
}

int run_subsample(const GlobalArgs& g, const std::string& series_path,
                  const std::string& pattern_path, const std::string& out_path,
                  double sigma, uint64_t noise_seed) {
  PlaneSeries series = io::read_series(series_path);
  auto pattern = io::read_pattern(pattern_path);
  auto data = sensing::apply_sensing(pattern, series);
  double snr = datagen::kSnrInfinite;
  if (sigma > 0) {
    auto nr = datagen::add_noise(data, sigma, noise_seed);
    data = std::move(nr.data);
    snr = nr.snr_db;
  }
  io::write_sensor(out_path, data, parse_dtype(g.dtype), pattern_path,
                   json{{"sigma", sigma}, {"snr_db", snr}});
  std::cout << "subsample: " << data.m_c << " x " << data.nt << " measurements -> " << out_path
            << "\n";
  return 0;
}

int run_reconstruct(const GlobalArgs& g, const std::string& data_path,
                    const std::string& pattern_path, const std::string& method,
                    const std::string& lambda, const std::string& out_path,
                    std::optional<double> sigma_arg) {
  json config = io::load_config(g.config);
  io::validate_config(config);
  Grid grid = io::grid_from_config(config.at("grid"));
  auto pattern = io::read_pattern(pattern_path);
  auto data = io::read_sensor(data_path);

  json rc = config.value("reconstruction", json::object());
  if (!method.empty()) rc["method"] = method;
  if (!lambda.empty()) {
    if (lambda == "auto")
      rc["lambda"] = "auto";
    else
      rc["lambda"] = std::stod(lambda);
  }
  auto cfg = io::recon_from_config(rc, parse_dtype(g.dtype));

  std::optional<double> sigma = sigma_arg;
  if (!sigma && data.noise_sigma > 0) sigma = data.noise_sigma;

  auto result = recon::reconstruct(data, pattern, grid, cfg, sigma);
  io::write_field(out_path, result.image, grid.spacing, parse_dtype(g.dtype),
                  json{{"method", result.method}, {"lambda", result.lambda_used}});
  io::write_recon_report(out_path + ".report.json", result,
                         json{{"pattern", pattern_path}, {"data", data_path}});
  std::cout << "reconstruct: method=" << result.method << " lambda_used=" << result.lambda_used
            << " -> " << out_path << "\n";
  return 0;
}

int run_evaluate(const std::string& recon_path, const std::string& truth_path,
                 const std::string& report_path) {
  Field p = io::read_field(recon_path);
  Field p0 = io::read_field(truth_path);
  const double val = io::psnr(p, p0);
  json report{{"psnr_db", val}, {"recon", recon_path}, {"truth", truth_path}};
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << report.dump(2) << "\n";
  }
  std::cout << report.dump(2) << "\n";
  return 0;
}

int run_mip(const std::string& field_path, const std::string& axis,
            const std::string& out_path, bool shared_scale, double scale_value) {
  Field f = io::read_field(field_path);
  require(axis.size() == 1, "--axis must be x, y or z");
  auto img = io::mip(f, axis[0]);
  std::optional<double> clip;
  if (shared_scale)
    clip = scale_value;
  else
    clip = io::clip_threshold(f.v);
  io::write_pgm(img, out_path, clip);
  std::cout << "mip: " << img.width << "x" << img.height << " -> " << out_path << "\n";
  return 0;
}

int run_full_pipeline(const GlobalArgs& g, const std::string& out_dir) {
  json config = io::load_config(g.config);
  auto outcome = io::run_pipeline(config, out_dir, g.seed);
  std::cout << "pipeline: wrote " << outcome.artifacts.size() << " artifacts, manifest at "
            << outcome.manifest_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compressed-sensing photoacoustic tomography"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config, "run configuration JSON");
  uint64_t seed_val = 0;
  auto* seed_opt = app.add_option("--seed", seed_val, "override configured seeds");
  app.add_flag("--deterministic", g.deterministic,
               "fixed reduction order (forces --threads unless given)");
  auto* threads_opt = app.add_option("--threads", g.threads, "internal thread budget");
  app.add_option("--dtype", g.dtype, "file/compute precision: f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));

  auto* sim = app.add_subcommand("simulate", "phantom + forward + perturbations -> data files");
  std::string sim_out = "out";
  sim->add_option("--out", sim_out, "output directory");

  auto* sub = app.add_subcommand("subsample", "apply a sensing pattern to a stored series");
  std::string sub_series, sub_pattern, sub_out = "sensor.raw";
  double sub_sigma = 0;
  uint64_t sub_noise_seed = 41;
  sub->add_option("--series", sub_series, "plane series file")->required();
  sub->add_option("--pattern", sub_pattern, "pattern JSON")->required();
  sub->add_option("--out", sub_out, "output sensor file");
  sub->add_option("--noise-sigma", sub_sigma, "additive white noise std");
  sub->add_option("--noise-seed", sub_noise_seed, "noise seed");

  auto* rec = app.add_subcommand("reconstruct", "reconstruct from sensor data");
  std::string rec_data, rec_pattern, rec_method, rec_lambda, rec_out = "recon.raw";
  double rec_sigma = 0;
  rec->add_option("--data", rec_data, "sensor data file")->required();
  rec->add_option("--pattern", rec_pattern, "pattern JSON")->required();
  rec->add_option("--method", rec_method, "bp|tr|l2plus|tvplus|tvplus_bregman|tr_pp_tv|bp_pp_tv");
  rec->add_option("--lambda", rec_lambda, "regularization weight or 'auto'");
  rec->add_option("--sigma", rec_sigma, "noise level for the discrepancy principle");
  rec->add_option("--out", rec_out, "output field file");

  auto* eva = app.add_subcommand("evaluate", "PSNR report vs ground truth");
  std::string eva_recon, eva_truth, eva_report;
  eva->add_option("--recon", eva_recon, "reconstruction field")->required();
  eva->add_option("--truth", eva_truth, "ground-truth field")->required();
  eva->add_option("--report", eva_report, "write report JSON here");

  auto* mip_cmd = app.add_subcommand("mip", "maximum intensity projection to PGM");
  std::string mip_field, mip_axis = "y", mip_out = "mip.pgm";
  bool mip_shared = false;
  double mip_scale = 1.0;
  mip_cmd->add_option("--field", mip_field, "field file")->required();
  mip_cmd->add_option("--axis", mip_axis, "projection axis: x|y|z");
  mip_cmd->add_option("--out", mip_out, "output PGM");
  mip_cmd->add_flag("--shared-scale", mip_shared, "use --scale-value instead of the clip rule");
  mip_cmd->add_option("--scale-value", mip_scale, "shared color-scale ceiling");

  auto* pipe = app.add_subcommand("pipeline", "run a full configuration end-to-end");
  std::string pipe_out = "out";
  pipe->add_option("--out", pipe_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  if (g.deterministic && threads_opt->count() == 0) g.threads = 1;
  set_threads(g.threads);
  if (seed_opt->count() > 0) g.seed = seed_val;

  try {
    if (sim->parsed()) return run_simulate(g, sim_out);
    if (sub->parsed())
      return run_subsample(g, sub_series, sub_pattern, sub_out, sub_sigma, sub_noise_seed);
    if (rec->parsed())
      return run_reconstruct(g, rec_data, rec_pattern, rec_method, rec_lambda, rec_out,
                             rec_sigma > 0 ? std::optional<double>(rec_sigma) : std::nullopt);
    if (eva->parsed()) return run_evaluate(eva_recon, eva_truth, eva_report);
    if (mip_cmd->parsed()) return run_mip(mip_field, mip_axis, mip_out, mip_shared, mip_scale);
    if (pipe->parsed()) return run_full_pipeline(g, pipe_out);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
