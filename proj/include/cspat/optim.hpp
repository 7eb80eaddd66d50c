#pragma once

#include <functional>
#include <vector>

#include "cspat/core.hpp"

namespace cspat::optim {

enum class TvBoundary { neumann_all, dirichlet_all, dirichlet_detection_plane };

struct TvConfig {
  TvBoundary boundary = TvBoundary::neumann_all;
  bool nonneg = true;
  int pdhg_iters = 2000;   // standalone denoising; solvers pass 200
  double pdhg_tol = 1e-6;  // relative objective stagnation tolerance

  void validate() const {
    require(pdhg_iters >= 1, "pdhg_iters must be >= 1");
    require(pdhg_tol > 0, "pdhg_tol must be positive");
  }
};

struct FistaConfig {
  int max_iters = 50;
  double step_scale = 1.8;  // step = step_scale / L
  bool restart = true;
  int backtrack_max = 5;
  int stall_window = 5;

  void validate() const {
    require(max_iters >= 1, "fista max_iters must be >= 1");
    require(step_scale > 0 && step_scale < 2, "step_scale must be in (0, 2)");
  }
};

// Sum over voxels of the Euclidean norm of the forward-difference gradient,
// with boundary terms per cfg.
double tv_energy(const Field& p, const TvConfig& cfg);

// Elementwise max(0, q_i / (1 + alpha)); the proximal map of the
// positivity-constrained half-squared-norm regularizer.
Field prox_l2_nonneg(const Field& q, double alpha);
void prox_l2_nonneg_inplace(std::vector<double>& q, double alpha);

// Approximate minimizer of 1/2 ||q - p||^2 + lambda TV(q) over q >= 0 (when
// cfg.nonneg), via primal-dual hybrid gradient.
Field tv_denoise(const Field& p, double lambda, const TvConfig& cfg);

// Largest-eigenvalue estimate of a self-adjoint PSD operator.
double power_iteration(const std::function<void(const std::vector<double>&, std::vector<double>&)>& op,
                       size_t dim, int n_iters, double tol, uint64_t seed = 1);

// Composite problem 1/2 ||K x - f||^2 + lambda J(x), solved by accelerated
// proximal gradient. forward/adjoint apply K and K^T; prox solves the
// proximal map of J in place with the given step; reg evaluates J.
struct FistaProblem {
  std::function<void(const std::vector<double>&, std::vector<double>&)> forward;
  std::function<void(const std::vector<double>&, std::vector<double>&)> adjoint;
  const std::vector<double>* data = nullptr;
  std::function<void(std::vector<double>&, double)> prox;
  std::function<double(const std::vector<double>&)> reg;
  double lambda = 0;
  size_t n = 0;  // unknown size
  size_t m = 0;  // data size
};

struct IterRecord {
  int iter = 0;
  double objective = 0;
  double residual_norm = 0;  // ||K x - f||
  bool restarted = false;
  int backtracks = 0;
};

struct FistaResult {
  std::vector<double> x;       // best-objective iterate
  std::vector<double> kx;      // K x for the best iterate
  double objective = 0;
  double residual_norm = 0;    // ||K x_best - f||
  std::vector<IterRecord> log;
  std::string stop_reason;
};

FistaResult fista(const FistaProblem& problem, double lipschitz,
                  const FistaConfig& cfg, const std::vector<double>& x0);

}  // namespace cspat::optim
