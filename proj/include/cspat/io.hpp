#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cspat/core.hpp"
#include "cspat/recon.hpp"
#include "cspat/sensing.hpp"

#include "json.hpp"

namespace cspat::io {

inline constexpr double kPsnrCap = 300.0;  // sentinel for an exact match

// Peak signal-to-noise ratio after rescale-and-threshold normalization:
// p is rescaled by its max-abs, both volumes thresholded at `threshold`
// (values below it set to 0), then -10 log10(MSE).
double psnr(const Field& p, const Field& p0, double threshold = 0.1);

struct Image2d {
  int width = 0, height = 0;
  std::vector<double> v;  // row-major
  double& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
};

// Per-pixel maximum along the given axis ('x', 'y' or 'z').
Image2d mip(const Field& field, char axis);

// Color-scale ceiling: the value separating the top 100/256 percent of the
// positive values from the rest.
double clip_threshold(const std::vector<double>& values);

// 8-bit binary PGM, values clipped to [0, clip] (clip computed from the
// image when not given).
void write_pgm(const Image2d& img, const std::string& path,
               std::optional<double> clip = std::nullopt);

// --- raw files with JSON sidecars (sidecar = path + ".json") ---------------

void write_field(const std::string& path, const Field& f,
                 const std::array<double, 3>& spacing_m, Dtype dtype,
                 const nlohmann::json& provenance = {});
Field read_field(const std::string& path);

void write_series(const std::string& path, const PlaneSeries& s, Dtype dtype,
                  const nlohmann::json& provenance = {});
PlaneSeries read_series(const std::string& path);

void write_pattern(const std::string& path, const sensing::SensingPattern& p);
sensing::SensingPattern read_pattern(const std::string& path);

// Sensor files are measurement-fastest on disk: value index = t*m_c + m.
void write_sensor(const std::string& path, const sensing::SensorData& d, Dtype dtype,
                  const std::string& pattern_file, const nlohmann::json& provenance = {});
sensing::SensorData read_sensor(const std::string& path);

void write_iteration_log_csv(const std::string& path,
                             const std::vector<optim::IterRecord>& log);

void write_recon_report(const std::string& path, const recon::ReconResult& r,
                        const nlohmann::json& provenance = {});

// --- run configuration and pipeline -----------------------------------------

nlohmann::json load_config(const std::string& path);

// Schema-checks a full run configuration; unknown keys are rejected.
void validate_config(const nlohmann::json& config);

Grid grid_from_config(const nlohmann::json& grid_cfg);
sensing::SensingPattern pattern_from_config(const nlohmann::json& pattern_cfg,
                                            std::array<int, 2> plane_dims);
recon::ReconConfig recon_from_config(const nlohmann::json& recon_cfg, Dtype dtype);

struct PipelineOutcome {
  std::vector<std::string> artifacts;  // paths relative to out_dir
  std::string manifest_path;
};

// Execute a full run configuration end-to-end, writing every artifact with a
// provenance sidecar plus a manifest listing them.
PipelineOutcome run_pipeline(const nlohmann::json& config, const std::string& out_dir,
                             std::optional<uint64_t> seed_override = std::nullopt);

}  // namespace cspat::io
