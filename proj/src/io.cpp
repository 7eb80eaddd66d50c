#include "cspat/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cspat/datagen.hpp"
#include "cspat/wave.hpp"

namespace cspat::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string dtype_name(Dtype d) { return d == Dtype::f64 ? "f64" : "f32"; }

Dtype dtype_from_name(const std::string& s) {
  if (s == "f64") return Dtype::f64;
  if (s == "f32") return Dtype::f32;
  throw ValidationError("unknown dtype: " + s);
}

void write_raw(const std::string& path, const std::vector<double>& v, Dtype dtype) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot open for writing: " + path);
  if (dtype == Dtype::f64) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  } else {
    std::vector<float> f(v.begin(), v.end());
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  require(static_cast<bool>(out), "write failed: " + path);
}

std::vector<double> read_raw(const std::string& path, size_t count, Dtype dtype) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open: " + path);
  std::vector<double> v(count);
  if (dtype == Dtype::f64) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    std::vector<float> f(count);
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    std::copy(f.begin(), f.end(), v.begin());
  }
  require(static_cast<bool>(in), "short read: " + path);
  return v;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("bad JSON in " + path + ": " + e.what());
  }
  return j;
}

void check_keys(const json& obj, const std::string& section,
                std::initializer_list<const char*> allowed) {
  require(obj.is_object(), section + " must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    require(ok, "unknown key '" + it.key() + "' in " + section);
  }
}

}  // namespace

double psnr(const Field& p, const Field& p0, double threshold) {
  require(p.dims == p0.dims, "psnr: dims mismatch");
  double p0_max = 0;
  for (double v : p0.v) p0_max = std::max(p0_max, std::abs(v));
  require(p0_max > 0, "psnr: ground truth is identically zero");
  double p_max = 0;
  for (double v : p.v) p_max = std::max(p_max, std::abs(v));
  const double ps = p_max > 0 ? 1.0 / p_max : 0.0;
  const double p0s = 1.0 / p0_max;

  double mse = 0;
  for (size_t i = 0; i < p.size(); i++) {
    double a = p.v[i] * ps;
    double b = p0.v[i] * p0s;
    if (a < threshold) a = 0;
    if (b < threshold) b = 0;
    const double d = a - b;
    mse += d * d;
  }
  mse /= static_cast<double>(p.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

Image2d mip(const Field& field, char axis) {
  const int nx = field.dims[0], ny = field.dims[1], nz = field.dims[2];
  Image2d img;
  if (axis == 'x') {
    img.width = ny;
    img.height = nz;
    img.v.assign(static_cast<size_t>(ny) * nz, -std::numeric_limits<double>::infinity());
    for (int z = 0; z < nz; z++)
      for (int y = 0; y < ny; y++)
        for (int x = 0; x < nx; x++) img.at(y, z) = std::max(img.at(y, z), field.at(x, y, z));
  } else if (axis == 'y') {
    img.width = nx;
    img.height = nz;
    img.v.assign(static_cast<size_t>(nx) * nz, -std::numeric_limits<double>::infinity());
    for (int z = 0; z < nz; z++)
      for (int y = 0; y < ny; y++)
        for (int x = 0; x < nx; x++) img.at(x, z) = std::max(img.at(x, z), field.at(x, y, z));
  } else if (axis == 'z') {
    img.width = nx;
    img.height = ny;
    img.v.assign(static_cast<size_t>(nx) * ny, -std::numeric_limits<double>::infinity());
    for (int z = 0; z < nz; z++)
      for (int y = 0; y < ny; y++)
        for (int x = 0; x < nx; x++) img.at(x, y) = std::max(img.at(x, y), field.at(x, y, z));
  } else {
    throw ValidationError("mip: axis must be one of x, y, z");
  }
  return img;
}

double clip_threshold(const std::vector<double>& values) {
  std::vector<double> pos;
  pos.reserve(values.size());
  for (double v : values)
    if (v > 0) pos.push_back(v);
  if (pos.empty()) return 0.0;
  const double q = 1.0 - (100.0 / 256.0) / 100.0;
  size_t idx = static_cast<size_t>(q * static_cast<double>(pos.size()));
  if (idx >= pos.size()) idx = pos.size() - 1;
  std::nth_element(pos.begin(), pos.begin() + idx, pos.end());
  return pos[idx];
}

void write_pgm(const Image2d& img, const std::string& path, std::optional<double> clip) {
  double ceiling = clip.value_or(clip_threshold(img.v));
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot open for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  const double scale = ceiling > 0 ? 255.0 / ceiling : 0.0;
  std::vector<unsigned char> row(img.width);
  for (int y = 0; y < img.height; y++) {
    for (int x = 0; x < img.width; x++) {
      const double v = std::clamp(img.at(x, y) * scale, 0.0, 255.0);
      row[x] = static_cast<unsigned char>(std::lround(v));
    }
    out.write(reinterpret_cast<const char*>(row.data()), img.width);
  }
}

void write_field(const std::string& path, const Field& f,
                 const std::array<double, 3>& spacing_m, Dtype dtype,
                 const json& provenance) {
  write_raw(path, f.v, dtype);
  json side{{"type", "field"},
            {"dims", f.dims},
            {"spacing_m", spacing_m},
            {"dtype", dtype_name(dtype)},
            {"order", "x-fastest"}};
  if (!provenance.is_null() && !provenance.empty()) side["provenance"] = provenance;
  write_json(path + ".json", side);
}

Field read_field(const std::string& path) {
  const json side = read_json(path + ".json");
  require(side.value("type", "") == "field", "sidecar is not a field: " + path);
  const auto dims = side.at("dims").get<std::array<int, 3>>();
  Field f(dims);
  f.v = read_raw(path, f.size(), dtype_from_name(side.at("dtype").get<std::string>()));
  return f;
}

void write_series(const std::string& path, const PlaneSeries& s, Dtype dtype,
                  const json& provenance) {
  write_raw(path, s.v, dtype);
  json side{{"type", "plane_series"},
            {"dims", std::array<int, 3>{s.dims[0], s.dims[1], s.nt}},
            {"dtype", dtype_name(dtype)},
            {"order", "time-fastest"}};
  if (!provenance.is_null() && !provenance.empty()) side["provenance"] = provenance;
  write_json(path + ".json", side);
}

PlaneSeries read_series(const std::string& path) {
  const json side = read_json(path + ".json");
  require(side.value("type", "") == "plane_series", "sidecar is not a plane series: " + path);
  const auto d = side.at("dims").get<std::array<int, 3>>();
  PlaneSeries s(d[0], d[1], d[2]);
  s.v = read_raw(path, s.size(), dtype_from_name(side.at("dtype").get<std::string>()));
  return s;
}

void write_pattern(const std::string& path, const sensing::SensingPattern& p) {
  json j{{"kind", p.kind == sensing::Kind::conventional ? "conventional"
                  : p.kind == sensing::Kind::rsp        ? "rsp"
                  : p.kind == sensing::Kind::gsp        ? "gsp"
                                                        : "shd"},
         {"dims", p.dims},
         {"m_c", p.m_c},
         {"seed", p.seed},
         {"mode", p.mode == sensing::HadamardMode::bipolar ? "bipolar" : "binary"}};
  if (p.kind == sensing::Kind::shd) {
    j["permutation"] = p.permutation;
    j["rows"] = p.rows;
  } else {
    j["selection"] = p.selection;
  }
  write_json(path, j);
}

sensing::SensingPattern read_pattern(const std::string& path) {
  const json j = read_json(path);
  sensing::SensingPattern p;
  const std::string kind = j.at("kind").get<std::string>();
  p.kind = kind == "conventional" ? sensing::Kind::conventional
           : kind == "rsp"        ? sensing::Kind::rsp
           : kind == "gsp"        ? sensing::Kind::gsp
           : kind == "shd"        ? sensing::Kind::shd
                                  : throw ValidationError("unknown pattern kind: " + kind);
  p.dims = j.at("dims").get<std::array<int, 2>>();
  p.m_c = j.at("m_c").get<int>();
  p.seed = j.value("seed", 0ULL);
  p.mode = j.value("mode", "bipolar") == "binary" ? sensing::HadamardMode::binary
                                                  : sensing::HadamardMode::bipolar;
  if (p.kind == sensing::Kind::shd) {
    p.permutation = j.at("permutation").get<std::vector<int>>();
    p.rows = j.at("rows").get<std::vector<int>>();
  } else {
    p.selection = j.at("selection").get<std::vector<int>>();
  }
  p.validate();
  return p;
}

void write_sensor(const std::string& path, const sensing::SensorData& d, Dtype dtype,
                  const std::string& pattern_file, const json& provenance) {
  // on disk the measurement index is fastest
  std::vector<double> t(static_cast<size_t>(d.m_c) * d.nt);
  for (int m = 0; m < d.m_c; m++)
    for (int ti = 0; ti < d.nt; ti++)
      t[static_cast<size_t>(ti) * d.m_c + m] = d.v[static_cast<size_t>(m) * d.nt + ti];
  write_raw(path, t, dtype);
  json side{{"type", "sensor_data"},
            {"m_c", d.m_c},
            {"nt", d.nt},
            {"dtype", dtype_name(dtype)},
            {"order", "measurement-fastest"},
            {"pattern", pattern_file},
            {"noise_sigma", d.noise_sigma}};
  if (!provenance.is_null() && !provenance.empty()) side["provenance"] = provenance;
  write_json(path + ".json", side);
}

sensing::SensorData read_sensor(const std::string& path) {
  const json side = read_json(path + ".json");
  require(side.value("type", "") == "sensor_data", "sidecar is not sensor data: " + path);
  sensing::SensorData d(side.at("m_c").get<int>(), side.at("nt").get<int>());
  const auto t = read_raw(path, d.v.size(), dtype_from_name(side.at("dtype").get<std::string>()));
  for (int m = 0; m < d.m_c; m++)
    for (int ti = 0; ti < d.nt; ti++)
      d.v[static_cast<size_t>(m) * d.nt + ti] = t[static_cast<size_t>(ti) * d.m_c + m];
  d.noise_sigma = side.value("noise_sigma", 0.0);
  return d;
}

void write_iteration_log_csv(const std::string& path,
                             const std::vector<optim::IterRecord>& log) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open for writing: " + path);
  out << "iter,objective,data_discrepancy,step_events\n";
  out.precision(12);
  for (const auto& r : log) {
    std::string events;
    if (r.restarted) events += "restart";
    if (r.backtracks > 0) {
      if (!events.empty()) events += "+";
      events += "backtrack" + std::to_string(r.backtracks);
    }
    out << r.iter << "," << r.objective << "," << r.residual_norm << "," << events << "\n";
  }
}

void write_recon_report(const std::string& path, const recon::ReconResult& r,
                        const json& provenance) {
  json j{{"method", r.method},
         {"lambda", r.lambda_used},
         {"kappa", r.kappa},
         {"iterations", r.iterations.size()},
         {"residual", r.residual_final},
         {"discrepancy", r.discrepancy_final}};
  if (r.psnr_db) j["psnr_db"] = *r.psnr_db;
  if (!r.dp_probes.empty()) {
    json probes = json::array();
    for (const auto& p : r.dp_probes) probes.push_back({{"lambda", p.lambda}, {"discrepancy", p.discrepancy}});
    j["dp_probes"] = probes;
  }
  if (!r.bregman_residuals.empty()) j["bregman_residuals"] = r.bregman_residuals;
  if (!provenance.is_null() && !provenance.empty()) j["provenance"] = provenance;
  write_json(path, j);
}

json load_config(const std::string& path) { return read_json(path); }

void validate_config(const json& config) {
  check_keys(config, "config",
             {"grid", "phantom", "perturbations", "pattern", "noise", "reconstruction",
              "outputs"});
  require(config.contains("grid"), "config requires a grid section");
  check_keys(config.at("grid"), "grid",
             {"dims", "spacing_m", "c0", "dt", "nt", "pml_thickness", "pml_alpha"});
  if (config.contains("phantom"))
    check_keys(config.at("phantom"), "phantom",
               {"kind", "seed", "params", "supersample", "presmooth", "remap_contrast"});
  if (config.contains("perturbations"))
    check_keys(config.at("perturbations"), "perturbations",
               {"sigma_s", "sigma_n", "sound_speed_amplitude", "seed_sensitivity",
                "seed_noise_map", "seed_sound_speed"});
  if (config.contains("pattern"))
    check_keys(config.at("pattern"), "pattern",
               {"kind", "m_c", "stride", "m_sub", "frame", "seed", "mode"});
  if (config.contains("noise")) check_keys(config.at("noise"), "noise", {"sigma", "seed"});
  if (config.contains("reconstruction"))
    check_keys(config.at("reconstruction"), "reconstruction",
               {"method", "lambda", "kappa", "dp_tol", "dp_inner_iters", "bregman_max",
                "bregman_lambda_factor", "postprocess_lambda", "zero_x_layers", "fista", "tv"});
  if (config.contains("outputs"))
    check_keys(config.at("outputs"), "outputs",
               {"dtype", "mip_axes", "write_series", "write_iteration_log"});
}

Grid grid_from_config(const json& g) {
  Grid grid;
  grid.dims = g.at("dims").get<std::array<int, 3>>();
  if (g.at("spacing_m").is_number()) {
    const double s = g.at("spacing_m").get<double>();
    grid.spacing = {s, s, s};
  } else {
    grid.spacing = g.at("spacing_m").get<std::array<double, 3>>();
  }
  grid.sound_speed = g.value("c0", 1500.0);
  grid.nt = g.at("nt").get<int>();
  grid.pml_thickness = g.value("pml_thickness", 10);
  grid.pml_alpha = g.value("pml_alpha", 2.0);
  if (!g.contains("dt") || (g.at("dt").is_string() && g.at("dt").get<std::string>() == "auto")) {
    const double dmin = std::min({grid.spacing[0], grid.spacing[1], grid.spacing[2]});
    grid.dt = kCflLimit * dmin / grid.max_c();
  } else {
    grid.dt = g.at("dt").get<double>();
  }
  grid.validate();
  return grid;
}

sensing::SensingPattern pattern_from_config(const json& p, std::array<int, 2> plane_dims) {
  const std::string kind = p.value("kind", "conventional");
  const uint64_t seed = p.value("seed", 1ULL);
  if (kind == "conventional") return sensing::make_conventional_pattern(plane_dims);
  if (kind == "rsp") return sensing::make_rsp_pattern(plane_dims, p.at("m_c").get<int>(), seed);
  if (kind == "gsp") return sensing::make_gsp_pattern(plane_dims, p.at("stride").get<int>());
  if (kind == "shd") {
    const auto mode = p.value("mode", "bipolar") == "binary" ? sensing::HadamardMode::binary
                                                             : sensing::HadamardMode::bipolar;
    return sensing::make_shd_pattern(plane_dims, p.at("m_c").get<int>(), seed, mode);
  }
  if (kind == "partition") {
    const int m_sub = p.at("m_sub").get<int>();
    const int frame = p.value("frame", 0);
    auto parts = sensing::partition_patterns(plane_dims, m_sub, seed);
    require(frame >= 0, "pattern: frame must be >= 0");
    return parts[static_cast<size_t>(frame) % parts.size()];
  }
  throw ValidationError("unknown pattern kind: " + kind);
}

recon::ReconConfig recon_from_config(const json& r, Dtype dtype) {
  recon::ReconConfig cfg;
  cfg.dtype = dtype;
  cfg.method = recon::method_from_string(r.value("method", "tvplus"));
  if (r.contains("lambda") && !(r.at("lambda").is_string()))
    cfg.lambda = r.at("lambda").get<double>();
  cfg.kappa = r.value("kappa", 1.25);
  cfg.dp_tol = r.value("dp_tol", 0.01);
  cfg.dp_inner_iters = r.value("dp_inner_iters", 50);
  cfg.bregman_max = r.value("bregman_max", 10);
  cfg.bregman_lambda_factor = r.value("bregman_lambda_factor", 10.0);
  cfg.postprocess_lambda = r.value("postprocess_lambda", 0.0);
  cfg.zero_x_layers = r.value("zero_x_layers", 1);
  if (r.contains("fista")) {
    const json& f = r.at("fista");
    check_keys(f, "fista", {"max_iters", "step_scale", "restart", "backtrack_max", "stall_window"});
    cfg.fista.max_iters = f.value("max_iters", cfg.fista.max_iters);
    cfg.fista.step_scale = f.value("step_scale", cfg.fista.step_scale);
    cfg.fista.restart = f.value("restart", cfg.fista.restart);
    cfg.fista.backtrack_max = f.value("backtrack_max", cfg.fista.backtrack_max);
    cfg.fista.stall_window = f.value("stall_window", cfg.fista.stall_window);
  }
  if (r.contains("tv")) {
    const json& t = r.at("tv");
    check_keys(t, "tv", {"boundary", "nonneg", "pdhg_iters", "pdhg_tol"});
    const std::string b = t.value("boundary", "neumann_all");
    cfg.tv.boundary = b == "neumann_all"              ? optim::TvBoundary::neumann_all
                      : b == "dirichlet_all"          ? optim::TvBoundary::dirichlet_all
                      : b == "dirichlet_detection_plane"
                          ? optim::TvBoundary::dirichlet_detection_plane
                          : throw ValidationError("unknown tv boundary: " + b);
    cfg.tv.nonneg = t.value("nonneg", true);
    cfg.tv.pdhg_iters = t.value("pdhg_iters", cfg.tv.pdhg_iters);
    cfg.tv.pdhg_tol = t.value("pdhg_tol", cfg.tv.pdhg_tol);
  }
  cfg.validate();
  return cfg;
}

PipelineOutcome run_pipeline(const json& config, const std::string& out_dir,
                             std::optional<uint64_t> seed_override) {
  validate_config(config);
  fs::create_directories(out_dir);
  PipelineOutcome outcome;
  auto artifact = [&](const std::string& name) {
    outcome.artifacts.push_back(name);
    return (fs::path(out_dir) / name).string();
  };

  const json outputs = config.value("outputs", json::object());
  const Dtype dtype = dtype_from_name(outputs.value("dtype", "f64"));
  Grid grid = grid_from_config(config.at("grid"));

  auto seed_of = [&](uint64_t base, uint64_t salt) {
    return seed_override ? *seed_override * 1000003ULL + salt : base;
  };

  // phantom
  require(config.contains("phantom"), "pipeline requires a phantom section");
  const json& ph = config.at("phantom");
  const auto kind = datagen::phantom_kind_from_string(ph.value("kind", "vessel_tree"));
  const uint64_t ph_seed = seed_of(ph.value("seed", 1ULL), 11);
  const json params = ph.value("params", json::object());
  const int super = ph.value("supersample", 1);
  Field p0;
  if (super > 1) {
    Grid fine = grid;
    for (int a = 0; a < 3; a++) {
      fine.dims[a] = grid.dims[a] * super;
      fine.spacing[a] = grid.spacing[a] / super;
    }
    fine.dt = kCflLimit * std::min({fine.spacing[0], fine.spacing[1], fine.spacing[2]}) /
              fine.max_c();
    Field fine_p0 = datagen::make_phantom(kind, fine, ph_seed, params);
    p0 = datagen::downsample_average(fine_p0, super);
  } else {
    p0 = datagen::make_phantom(kind, grid, ph_seed, params);
  }
  if (ph.value("remap_contrast", false)) {
    double mx = 0;
    for (double v : p0.v) mx = std::max(mx, v);
    require(mx > 0, "phantom is empty, cannot remap contrast");
    for (double& v : p0.v) v /= mx;
    p0 = datagen::remap_contrast(p0);
  }
  double presmooth_cutoff = 0;
  if (ph.value("presmooth", false)) {
    auto ps = datagen::presmooth(p0, grid);
    p0 = std::move(ps.field);
    presmooth_cutoff = ps.cutoff_hz;
  }
  json ph_prov{{"kind", ph.value("kind", "vessel_tree")},
               {"seed", ph_seed},
               {"params", params},
               {"supersample", super},
               {"presmooth_cutoff_hz", presmooth_cutoff}};
  write_field(artifact("phantom.raw"), p0, grid.spacing, dtype, ph_prov);

  // perturbations for data generation
  datagen::PerturbationSpec pert;
  if (config.contains("perturbations")) {
    const json& pc = config.at("perturbations");
    pert.sigma_s = pc.value("sigma_s", 0.0);
    pert.sigma_n = pc.value("sigma_n", 0.0);
    pert.sound_speed_amplitude = pc.value("sound_speed_amplitude", 0.0);
    pert.seed_sensitivity = seed_of(pc.value("seed_sensitivity", 21ULL), 21);
    pert.seed_noise_map = seed_of(pc.value("seed_noise_map", 22ULL), 22);
    pert.seed_sound_speed = seed_of(pc.value("seed_sound_speed", 23ULL), 23);
  }
  pert.validate();

  Grid gen_grid = grid;
  if (pert.sound_speed_amplitude > 0)
    gen_grid.sound_speed = datagen::perturb_sound_speed(grid.c_scalar(), p0,
                                                        pert.sound_speed_amplitude,
                                                        pert.seed_sound_speed);

  PlaneSeries series = wave::forward(p0, gen_grid, dtype);
  if (pert.sigma_s > 0) {
    auto ws = datagen::sensitivity_map({grid.dims[1], grid.dims[2]}, pert.sigma_s,
                                       pert.seed_sensitivity);
    datagen::apply_sensitivity(series, ws);
  }
  if (outputs.value("write_series", false))
    write_series(artifact("series.raw"), series, dtype);

  // sensing
  require(config.contains("pattern"), "pipeline requires a pattern section");
  json pat_cfg = config.at("pattern");
  if (seed_override) pat_cfg["seed"] = seed_of(pat_cfg.value("seed", 1ULL), 31);
  auto pattern = pattern_from_config(pat_cfg, {grid.dims[1], grid.dims[2]});
  write_pattern(artifact("pattern.json"), pattern);
  sensing::SensorData sensor = sensing::apply_sensing(pattern, series);

  double sigma = 0, snr_db = datagen::kSnrInfinite;
  if (config.contains("noise")) {
    const json& nc = config.at("noise");
    sigma = nc.value("sigma", 0.0);
    std::vector<double> noise_map;
    const std::vector<double>* map_ptr = nullptr;
    if (pert.sigma_n > 0) {
      noise_map = datagen::lognormal_weights(static_cast<size_t>(pattern.m_c), pert.sigma_n,
                                             pert.seed_noise_map);
      map_ptr = &noise_map;
    }
    auto nr = datagen::add_noise(sensor, sigma, seed_of(nc.value("seed", 41ULL), 41), map_ptr);
    sensor = std::move(nr.data);
    snr_db = nr.snr_db;
  }
  json sensor_prov{{"sigma", sigma},
                   {"snr_db", snr_db},
                   {"sigma_s", pert.sigma_s},
                   {"sigma_n", pert.sigma_n},
                   {"sound_speed_amplitude", pert.sound_speed_amplitude}};
  write_sensor(artifact("sensor.raw"), sensor, dtype, "pattern.json", sensor_prov);

  // reconstruction
  if (config.contains("reconstruction")) {
    auto cfg = recon_from_config(config.at("reconstruction"), dtype);
    std::optional<double> sig = sigma > 0 ? std::optional<double>(sigma) : std::nullopt;
    recon::ReconResult result = recon::reconstruct(sensor, pattern, grid, cfg, sig);
    result.psnr_db = psnr(result.image, p0);
    write_field(artifact("recon.raw"), result.image, grid.spacing, dtype,
                json{{"method", result.method}, {"lambda", result.lambda_used}});
    json report_prov{{"config", config}, {"snr_db", snr_db}};
    write_recon_report(artifact("recon_report.json"), result, report_prov);
    if (outputs.value("write_iteration_log", false))
      write_iteration_log_csv(artifact("iterations.csv"), result.iterations);

    const auto axes = outputs.value("mip_axes", std::vector<std::string>{"y"});
    for (const auto& ax : axes) {
      require(ax.size() == 1 && (ax[0] == 'x' || ax[0] == 'y' || ax[0] == 'z'),
              "mip_axes entries must be x, y or z");
      const double clip = clip_threshold(result.image.v);
      write_pgm(mip(result.image, ax[0]), artifact(std::string("recon_mip_") + ax + ".pgm"),
                clip);
    }
  }

  json manifest{{"artifacts", outcome.artifacts}, {"config", config}};
  if (seed_override) manifest["seed_override"] = *seed_override;
  outcome.manifest_path = (fs::path(out_dir) / "manifest.json").string();
  write_json(outcome.manifest_path, manifest);
  outcome.artifacts.push_back("manifest.json");
  return outcome;
}

}  // namespace cspat::io
