#include "cspat/recon.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace cspat::recon {

namespace {

// Shared forward/adjoint wiring for one reconstruction: x (field vector) ->
// C A x (sensor vector) and back.
struct Operators {
  wave::WaveEngine engine;
  const sensing::SensingPattern& pattern;
  const Grid& grid;
  size_t n, m;

  Operators(const sensing::SensingPattern& pat, const Grid& g, Dtype dtype)
      : engine(g, dtype), pattern(pat), grid(g) {
    require(pat.dims[0] == g.dims[1] && pat.dims[1] == g.dims[2],
            "pattern plane dims do not match grid");
    n = g.n_voxels();
    m = static_cast<size_t>(pat.m_c) * g.nt;
  }

  void forward(const std::vector<double>& x, std::vector<double>& out) {
    Field f(grid.dims);
    f.v = x;
    PlaneSeries s = engine.forward(f);
    sensing::SensorData d = sensing::apply_sensing(pattern, s);
    out = std::move(d.v);
  }

  void adjoint(const std::vector<double>& r, std::vector<double>& out) {
    sensing::SensorData d(pattern.m_c, grid.nt);
    d.v = r;
    PlaneSeries s = sensing::adjoint_sensing(pattern, d);
    Field f = engine.adjoint(s);
    out = std::move(f.v);
  }
};

std::string cache_key(const sensing::SensingPattern& p, const Grid& g, Dtype dtype) {
  // FNV-1a over the pattern internals keeps the key short
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  for (int s : p.selection) mix(static_cast<uint64_t>(s) + 1);
  for (int s : p.permutation) mix(static_cast<uint64_t>(s) + 3);
  for (int s : p.rows) mix(static_cast<uint64_t>(s) + 5);
  std::ostringstream os;
  os << "L_" << g.dims[0] << "x" << g.dims[1] << "x" << g.dims[2] << "_" << g.spacing[0] << "_"
     << g.spacing[1] << "_" << g.spacing[2] << "_" << g.dt << "_" << g.nt << "_" << g.max_c()
     << "_" << g.pml_thickness << "_" << g.pml_alpha << "_k" << static_cast<int>(p.kind) << "_m"
     << p.m_c << "_s" << p.seed << "_md" << static_cast<int>(p.mode) << "_h" << h << "_"
     << (dtype == Dtype::f64 ? "f64" : "f32");
  return os.str();
}

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

std::unordered_map<std::string, double>& cache_map() {
  static std::unordered_map<std::string, double> m;
  return m;
}

std::optional<double> cache_load_file(const std::string& key) {
  const char* dir = std::getenv("CS_PAT_CACHE");
  if (!dir) return std::nullopt;
  std::ifstream in(std::filesystem::path(dir) / (key + ".txt"));
  if (!in) return std::nullopt;
  double v;
  if (in >> v) return v;
  return std::nullopt;
}

void cache_store_file(const std::string& key, double value) {
  const char* dir = std::getenv("CS_PAT_CACHE");
  if (!dir) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  const auto final_path = std::filesystem::path(dir) / (key + ".txt");
  const auto tmp_path = std::filesystem::path(dir) / (key + ".tmp");
  {
    std::ofstream out(tmp_path);
    out.precision(17);
    out << value << "\n";
  }
  std::filesystem::rename(tmp_path, final_path, ec);  // atomic insert
}

Field to_field(const Grid& grid, std::vector<double>&& v) {
  Field f(grid.dims);
  f.v = std::move(v);
  return f;
}

// Variational solve at a fixed lambda; shared by the DP search, the plain
// solve, and the Bregman outer loop.
optim::FistaResult solve_at(Operators& ops, const std::vector<double>& data, Method method,
                            double lambda, const ReconConfig& cfg, int max_iters,
                            const std::vector<double>* warm_start) {
  optim::FistaProblem prob;
  prob.n = ops.n;
  prob.m = ops.m;
  prob.data = &data;
  prob.lambda = lambda;
  prob.forward = [&ops](const std::vector<double>& x, std::vector<double>& out) {
    ops.forward(x, out);
  };
  prob.adjoint = [&ops](const std::vector<double>& r, std::vector<double>& out) {
    ops.adjoint(r, out);
  };

  const optim::TvConfig& tv = cfg.tv;
  const Grid& grid = ops.grid;
  if (method == Method::l2plus) {
    prob.prox = [](std::vector<double>& x, double alpha) {
      optim::prox_l2_nonneg_inplace(x, alpha);
    };
    prob.reg = [](const std::vector<double>& x) {
      double s = 0;
      for (double v : x) s += v * v;
      return 0.5 * s;
    };
  } else {
    prob.prox = [&tv, &grid](std::vector<double>& x, double alpha) {
      Field f(grid.dims);
      f.v = std::move(x);
      Field out = optim::tv_denoise(f, alpha, tv);
      x = std::move(out.v);
    };
    prob.reg = [&tv, &grid](const std::vector<double>& x) {
      Field f(grid.dims);
      f.v = x;
      const double e = optim::tv_energy(f, tv);
      const_cast<std::vector<double>&>(f.v).clear();
      return e;
    };
  }

  const double L = lipschitz_constant(ops.pattern, ops.grid, cfg.dtype);
  optim::FistaConfig fcfg = cfg.fista;
  fcfg.max_iters = max_iters;
  std::vector<double> x0 = warm_start ? *warm_start : std::vector<double>(ops.n, 0.0);
  return optim::fista(prob, L, fcfg, x0);
}

ReconResult finish(Operators& ops, const ReconConfig& cfg, optim::FistaResult&& fr,
                   double lambda, std::optional<double> sigma) {
  ReconResult res;
  res.method = method_name(cfg.method);
  res.lambda_used = lambda;
  res.kappa = cfg.kappa;
  res.iterations = std::move(fr.log);
  res.residual_final = fr.residual_norm;
  if (sigma)
    res.discrepancy_final = discrepancy(fr.residual_norm, ops.pattern.m_c, ops.grid.nt, *sigma);
  res.image = postprocess_standard(to_field(ops.grid, std::move(fr.x)), ops.grid,
                                   cfg.zero_x_layers);
  return res;
}

}  // namespace

Method method_from_string(const std::string& s) {
  if (s == "bp") return Method::bp;
  if (s == "tr") return Method::tr;
  if (s == "l2plus") return Method::l2plus;
  if (s == "tvplus") return Method::tvplus;
  if (s == "tvplus_bregman") return Method::tvplus_bregman;
  if (s == "tr_pp_tv") return Method::tr_pp_tv;
  if (s == "bp_pp_tv") return Method::bp_pp_tv;
  throw ValidationError("unknown reconstruction method: " + s);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::bp: return "bp";
    case Method::tr: return "tr";
    case Method::l2plus: return "l2plus";
    case Method::tvplus: return "tvplus";
    case Method::tvplus_bregman: return "tvplus_bregman";
    case Method::tr_pp_tv: return "tr_pp_tv";
    case Method::bp_pp_tv: return "bp_pp_tv";
  }
  return "?";
}

double discrepancy(double residual_norm, int m_c, int nt, double sigma) {
  require(sigma > 0, "discrepancy: sigma must be positive");
  return residual_norm / (std::sqrt(static_cast<double>(m_c) * nt) * sigma);
}

double lipschitz_constant(const sensing::SensingPattern& pattern, const Grid& grid,
                          Dtype dtype) {
  const std::string key = cache_key(pattern, grid, dtype);
  {
    std::lock_guard<std::mutex> lock(cache_mutex());
    auto it = cache_map().find(key);
    if (it != cache_map().end()) return it->second;
    if (auto v = cache_load_file(key)) {
      cache_map()[key] = *v;
      return *v;
    }
  }

  Operators ops(pattern, grid, dtype);
  std::vector<double> tmp(ops.m);
  auto normal_op = [&](const std::vector<double>& x, std::vector<double>& out) {
    ops.forward(x, tmp);
    ops.adjoint(tmp, out);
  };
  // small pad absorbs residual power-iteration slack so the 1.8/L step stays safe
  const double L = 1.02 * optim::power_iteration(normal_op, ops.n, 100, 1e-6, 7);
  require(L > 0, "lipschitz_constant: operator appears to be zero");

  {
    std::lock_guard<std::mutex> lock(cache_mutex());
    cache_map()[key] = L;
  }
  cache_store_file(key, L);
  return L;
}

Field postprocess_standard(const Field& image, const Grid& grid, int zero_x_layers) {
  require(image.dims == grid.dims, "postprocess: field dims do not match grid");
  require(zero_x_layers >= 0 && zero_x_layers <= grid.dims[0], "invalid zero_x_layers");
  Field out = image;
  for (double& v : out.v) v = std::max(0.0, v);
  for (int z = 0; z < grid.dims[2]; z++)
    for (int y = 0; y < grid.dims[1]; y++)
      for (int x = 0; x < zero_x_layers; x++) out.at(x, y, z) = 0.0;
  return out;
}

Field postprocess_tv(const Field& image, double lambda_pp, const optim::TvConfig& cfg) {
  return optim::tv_denoise(image, lambda_pp, cfg);
}

ReconResult reconstruct_bp(const sensing::SensorData& data,
                           const sensing::SensingPattern& pattern, const Grid& grid,
                           const ReconConfig& cfg) {
  PlaneSeries s = sensing::adjoint_sensing(pattern, data);
  Field img = wave::adjoint(s, grid, cfg.dtype);
  ReconResult res;
  res.method = "bp";
  res.image = postprocess_standard(img, grid, cfg.zero_x_layers);
  return res;
}

ReconResult reconstruct_tr(const sensing::SensorData& data,
                           const sensing::SensingPattern& pattern, const Grid& grid,
                           const ReconConfig& cfg) {
  PlaneSeries s = sensing::adjoint_sensing(pattern, data);
  Field img = wave::time_reverse(s, grid, cfg.dtype);
  ReconResult res;
  res.method = "tr";
  res.image = postprocess_standard(img, grid, cfg.zero_x_layers);
  return res;
}

ReconResult reconstruct_variational(const sensing::SensorData& data,
                                    const sensing::SensingPattern& pattern,
                                    const Grid& grid, const ReconConfig& cfg,
                                    std::optional<double> sigma) {
  cfg.validate();
  require(cfg.method == Method::l2plus || cfg.method == Method::tvplus,
          "reconstruct_variational expects l2plus or tvplus");
  if (!cfg.lambda) {
    require(sigma.has_value() && *sigma > 0,
            "lambda=auto requires a known noise level sigma");
    auto [lam, res] = discrepancy_select(data, pattern, grid, *sigma, cfg);
    return res;
  }
  Operators ops(pattern, grid, cfg.dtype);
  auto fr = solve_at(ops, data.v, cfg.method, *cfg.lambda, cfg, cfg.fista.max_iters, nullptr);
  return finish(ops, cfg, std::move(fr), *cfg.lambda, sigma);
}

std::pair<double, ReconResult> discrepancy_select(const sensing::SensorData& data,
                                                  const sensing::SensingPattern& pattern,
                                                  const Grid& grid, double sigma,
                                                  const ReconConfig& cfg) {
  cfg.validate();
  require(sigma > 0, "discrepancy_select: sigma must be positive");
  Operators ops(pattern, grid, cfg.dtype);

  // scale reference for the initial bracket
  std::vector<double> bp(ops.n);
  ops.adjoint(data.v, bp);
  double ref = 0;
  for (double v : bp) ref = std::max(ref, std::abs(v));
  require(ref > 0, "discrepancy_select: zero data");

  std::vector<DpProbe> probes;
  std::vector<std::pair<double, optim::FistaResult>> solves;
  auto probe = [&](double lam) -> double {
    auto fr = solve_at(ops, data.v, cfg.method, lam, cfg, cfg.dp_inner_iters, nullptr);
    const double d = discrepancy(fr.residual_norm, pattern.m_c, grid.nt, sigma);
    probes.push_back({lam, d});
    solves.emplace_back(lam, std::move(fr));
    return d;
  };

  const double lam_min = 1e-12 * ref, lam_max = 1e6 * ref;
  double lo = 1e-3 * ref, hi = 1e1 * ref;
  double d_lo = probe(lo);
  double d_hi = (std::abs(d_lo - cfg.kappa) <= cfg.dp_tol) ? d_lo : probe(hi);

  auto finish_at = [&](double lam) -> std::pair<double, ReconResult> {
    // verify the probes trace a monotone discrepancy curve
    auto sorted = probes;
    std::sort(sorted.begin(), sorted.end(),
              [](const DpProbe& a, const DpProbe& b) { return a.lambda < b.lambda; });
    for (size_t i = 1; i < sorted.size(); i++)
      if (sorted[i].discrepancy < sorted[i - 1].discrepancy * (1 - 1e-9))
        throw NumericalError("discrepancy_select: discrepancy not monotone over probes");

    optim::FistaResult* found = nullptr;
    for (auto& [l, fr] : solves)
      if (l == lam) found = &fr;
    optim::FistaResult fr;
    if (found && cfg.dp_inner_iters >= cfg.fista.max_iters) {
      fr = std::move(*found);
    } else {
      fr = solve_at(ops, data.v, cfg.method, lam, cfg, cfg.fista.max_iters, nullptr);
    }
    ReconResult res = finish(ops, cfg, std::move(fr), lam, sigma);
    res.dp_probes = probes;
    return {lam, std::move(res)};
  };

  if (std::abs(d_lo - cfg.kappa) <= cfg.dp_tol) return finish_at(lo);
  if (std::abs(d_hi - cfg.kappa) <= cfg.dp_tol) return finish_at(hi);

  // expand the bracket geometrically until it straddles kappa
  while (d_lo > cfg.kappa && lo > lam_min) {
    hi = lo;
    d_hi = d_lo;
    lo /= 10.0;
    d_lo = probe(lo);
    if (std::abs(d_lo - cfg.kappa) <= cfg.dp_tol) return finish_at(lo);
  }
  while (d_hi < cfg.kappa && hi < lam_max) {
    lo = hi;
    d_lo = d_hi;
    hi *= 10.0;
    d_hi = probe(hi);
    if (std::abs(d_hi - cfg.kappa) <= cfg.dp_tol) return finish_at(hi);
  }
  if (d_lo > cfg.kappa || d_hi < cfg.kappa)
    throw NumericalError(
        "discrepancy_select: no bracket with discrepancy crossing kappa inside "
        "lambda in [1e-12, 1e6] * scale; data may be inconsistent with sigma");

  for (int it = 0; it < 40; it++) {
    double lam = lo + (cfg.kappa - d_lo) * (hi - lo) / (d_hi - d_lo);
    if (!(lam > lo && lam < hi)) lam = std::sqrt(lo * hi);
    const double d = probe(lam);
    if (std::abs(d - cfg.kappa) <= cfg.dp_tol) return finish_at(lam);
    if (d < cfg.kappa) {
      lo = lam;
      d_lo = d;
    } else {
      hi = lam;
      d_hi = d;
    }
  }
  throw NumericalError("discrepancy_select: did not converge within the probe budget");
}

ReconResult bregman_tv(const sensing::SensorData& data,
                       const sensing::SensingPattern& pattern, const Grid& grid,
                       const ReconConfig& cfg, std::optional<double> sigma) {
  cfg.validate();
  double lambda;
  std::vector<DpProbe> dp_probes;
  if (cfg.lambda) {
    lambda = *cfg.lambda;
  } else {
    require(sigma.has_value() && *sigma > 0,
            "bregman_tv: lambda=auto requires a known sigma");
    ReconConfig tv_cfg = cfg;
    tv_cfg.method = Method::tvplus;
    auto [lam_tv, res_tv] = discrepancy_select(data, pattern, grid, *sigma, tv_cfg);
    dp_probes = res_tv.dp_probes;
    lambda = cfg.bregman_lambda_factor * lam_tv;
  }

  Operators ops(pattern, grid, cfg.dtype);
  const size_t m = ops.m;
  std::vector<double> shifted = data.v;   // f + b^k
  std::vector<double> x(ops.n, 0.0);
  std::vector<optim::IterRecord> all_iters;
  std::vector<double> residuals;
  optim::FistaResult last;

  for (int k = 1; k <= cfg.bregman_max; k++) {
    auto fr = solve_at(ops, shifted, Method::tvplus, lambda, cfg, cfg.fista.max_iters,
                       k == 1 ? nullptr : &x);
    x = fr.x;
    // residual against the original data
    double res2 = 0;
    for (size_t i = 0; i < m; i++) {
      const double r = fr.kx[i] - data.v[i];
      res2 += r * r;
    }
    const double res_norm = std::sqrt(res2);
    residuals.push_back(res_norm);
    for (auto& rec : fr.log) {
      rec.iter = static_cast<int>(all_iters.size()) + 1;
      all_iters.push_back(rec);
    }
    last = std::move(fr);
    // b^{k+1} = b^k + (f - C A p^{k+1}) folded into the shifted data
    for (size_t i = 0; i < m; i++) shifted[i] += data.v[i] - last.kx[i];

    if (sigma && discrepancy(res_norm, pattern.m_c, grid.nt, *sigma) < cfg.kappa) break;
  }

  ReconResult res;
  res.method = "tvplus_bregman";
  res.lambda_used = lambda;
  res.kappa = cfg.kappa;
  res.iterations = std::move(all_iters);
  res.bregman_residuals = std::move(residuals);
  res.dp_probes = std::move(dp_probes);
  res.residual_final = res.bregman_residuals.back();
  if (sigma)
    res.discrepancy_final = discrepancy(res.residual_final, pattern.m_c, grid.nt, *sigma);
  res.image = postprocess_standard(to_field(grid, std::move(x)), grid, cfg.zero_x_layers);
  return res;
}

ReconResult reconstruct(const sensing::SensorData& data,
                        const sensing::SensingPattern& pattern, const Grid& grid,
                        const ReconConfig& cfg, std::optional<double> sigma) {
  cfg.validate();
  switch (cfg.method) {
    case Method::bp:
      return reconstruct_bp(data, pattern, grid, cfg);
    case Method::tr:
      return reconstruct_tr(data, pattern, grid, cfg);
    case Method::l2plus:
    case Method::tvplus:
      return reconstruct_variational(data, pattern, grid, cfg, sigma);
    case Method::tvplus_bregman:
      return bregman_tv(data, pattern, grid, cfg, sigma);
    case Method::tr_pp_tv:
    case Method::bp_pp_tv: {
      PlaneSeries s = sensing::adjoint_sensing(pattern, data);
      Field img = cfg.method == Method::tr_pp_tv ? wave::time_reverse(s, grid, cfg.dtype)
                                                 : wave::adjoint(s, grid, cfg.dtype);
      optim::TvConfig tv = cfg.tv;
      tv.pdhg_iters = std::max(tv.pdhg_iters, 2000);  // standalone denoising budget
      Field den = postprocess_tv(img, cfg.postprocess_lambda, tv);
      ReconResult res;
      res.method = method_name(cfg.method);
      res.lambda_used = cfg.postprocess_lambda;
      res.image = postprocess_standard(den, grid, cfg.zero_x_layers);
      return res;
    }
  }
  throw ValidationError("unknown method");
}

}  // namespace cspat::recon
