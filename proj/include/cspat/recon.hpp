#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cspat/core.hpp"
#include "cspat/optim.hpp"
#include "cspat/sensing.hpp"
#include "cspat/wave.hpp"

namespace cspat::recon {

enum class Method { bp, tr, l2plus, tvplus, tvplus_bregman, tr_pp_tv, bp_pp_tv };

Method method_from_string(const std::string& s);
std::string method_name(Method m);

struct ReconConfig {
  Method method = Method::tvplus;
  std::optional<double> lambda;  // empty = select by the discrepancy principle
  double kappa = 1.25;
  double dp_tol = 0.01;
  int dp_inner_iters = 50;       // FISTA budget per DP probe
  int bregman_max = 10;
  double bregman_lambda_factor = 10.0;  // lambda_Br = factor * lambda_TV+
  optim::FistaConfig fista;
  optim::TvConfig tv;
  double postprocess_lambda = 0.0;  // pp variants
  int zero_x_layers = 1;            // layers zeroed by standard post-processing
  Dtype dtype = Dtype::f64;

  ReconConfig() { tv.pdhg_iters = 200; }

  void validate() const {
    require(kappa >= 1.0, "kappa must be >= 1");
    require(dp_tol > 0, "dp_tol must be positive");
    if (lambda) require(*lambda >= 0, "lambda must be >= 0");
    require(bregman_max >= 1, "bregman_max must be >= 1");
    require(zero_x_layers >= 0, "zero_x_layers must be >= 0");
    fista.validate();
    tv.validate();
  }
};

struct DpProbe {
  double lambda;
  double discrepancy;
};

struct ReconResult {
  Field image;
  std::string method;
  double lambda_used = 0.0;
  double kappa = 0.0;
  std::vector<optim::IterRecord> iterations;
  double discrepancy_final = 0.0;      // ||CAp - f|| / (sqrt(M_c M_t) sigma); 0 if sigma unknown
  double residual_final = 0.0;         // ||CAp - f||
  std::vector<DpProbe> dp_probes;      // discrepancy-principle search trace
  std::vector<double> bregman_residuals;  // per-outer ||CAp^k - f||
  std::optional<double> psnr_db;
};

// Normalized discrepancy ||r|| / (sqrt(M_c M_t) sigma).
double discrepancy(double residual_norm, int m_c, int nt, double sigma);

// Lipschitz estimate of A^T C^T C A, cached per (grid, pattern, dtype);
// the CS_PAT_CACHE environment variable names a persistent cache directory.
double lipschitz_constant(const sensing::SensingPattern& pattern, const Grid& grid,
                          Dtype dtype = Dtype::f64);

Field postprocess_standard(const Field& image, const Grid& grid, int zero_x_layers = 1);
Field postprocess_tv(const Field& image, double lambda_pp, const optim::TvConfig& cfg);

ReconResult reconstruct_bp(const sensing::SensorData& data,
                           const sensing::SensingPattern& pattern, const Grid& grid,
                           const ReconConfig& cfg = {});
ReconResult reconstruct_tr(const sensing::SensorData& data,
                           const sensing::SensingPattern& pattern, const Grid& grid,
                           const ReconConfig& cfg = {});

// L2+ / TV+ variational reconstruction (Tikhonov or total variation with
// non-negativity), lambda fixed or selected by the discrepancy principle.
ReconResult reconstruct_variational(const sensing::SensorData& data,
                                    const sensing::SensingPattern& pattern,
                                    const Grid& grid, const ReconConfig& cfg,
                                    std::optional<double> sigma = std::nullopt);

// Discrepancy-principle parameter selection: bracket + linear interpolation
// of the discrepancy until |disc - kappa| <= dp_tol.
std::pair<double, ReconResult> discrepancy_select(const sensing::SensorData& data,
                                                  const sensing::SensingPattern& pattern,
                                                  const Grid& grid, double sigma,
                                                  const ReconConfig& cfg);

// Bregman-enhanced TV+: iterate adding back residuals to the data; stops when
// the discrepancy falls below kappa (if sigma known) or at bregman_max.
ReconResult bregman_tv(const sensing::SensorData& data,
                       const sensing::SensingPattern& pattern, const Grid& grid,
                       const ReconConfig& cfg, std::optional<double> sigma = std::nullopt);

// Dispatch on cfg.method.
ReconResult reconstruct(const sensing::SensorData& data,
                        const sensing::SensingPattern& pattern, const Grid& grid,
                        const ReconConfig& cfg, std::optional<double> sigma = std::nullopt);

}  // namespace cspat::recon
