#include "cspat/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cspat::optim {

namespace {

struct BoundarySpec {
  // dirichlet_high[a]: forward difference at the last voxel along axis a
  // jumps to zero instead of replicating; dirichlet_low[a]: the jump across
  // the low face enters the energy as an extra term.
  std::array<bool, 3> dirichlet_high{false, false, false};
  std::array<bool, 3> dirichlet_low{false, false, false};
};

BoundarySpec boundary_spec(TvBoundary b) {
  BoundarySpec s;
  switch (b) {
    case TvBoundary::neumann_all:
      break;
    case TvBoundary::dirichlet_all:
      s.dirichlet_high = {true, true, true};
      s.dirichlet_low = {true, true, true};
      break;
    case TvBoundary::dirichlet_detection_plane:
      s.dirichlet_low = {true, false, false};
      break;
  }
  return s;
}

// Discrete gradient K and its transpose. Duals gx, gy, gz live on the voxel
// grid (zero where a Neumann edge suppresses the difference); Dirichlet low
// faces carry extra scalar duals, one per face voxel.
struct TvOperator {
  std::array<int, 3> dims;
  BoundarySpec bc;
  size_t n;
  std::array<size_t, 3> face_size;  // extras per low face (0 if Neumann)

  explicit TvOperator(const std::array<int, 3>& d, TvBoundary b)
      : dims(d), bc(boundary_spec(b)), n(static_cast<size_t>(d[0]) * d[1] * d[2]) {
    face_size[0] = bc.dirichlet_low[0] ? static_cast<size_t>(d[1]) * d[2] : 0;
    face_size[1] = bc.dirichlet_low[1] ? static_cast<size_t>(d[0]) * d[2] : 0;
    face_size[2] = bc.dirichlet_low[2] ? static_cast<size_t>(d[0]) * d[1] : 0;
  }

  size_t idx(int x, int y, int z) const {
    return static_cast<size_t>(x) + static_cast<size_t>(dims[0]) * (y + static_cast<size_t>(dims[1]) * z);
  }

  void apply(const std::vector<double>& p, std::vector<double>& gx,
             std::vector<double>& gy, std::vector<double>& gz,
             std::array<std::vector<double>, 3>& extras) const {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz; z++) {
      for (int y = 0; y < ny; y++) {
        size_t i = idx(0, y, z);
        for (int x = 0; x < nx; x++, i++) {
          const double pv = p[i];
          gx[i] = x + 1 < nx ? p[i + 1] - pv : (bc.dirichlet_high[0] ? -pv : 0.0);
          gy[i] = y + 1 < ny ? p[i + nx] - pv : (bc.dirichlet_high[1] ? -pv : 0.0);
          gz[i] = z + 1 < nz ? p[i + static_cast<size_t>(nx) * ny] - pv
                             : (bc.dirichlet_high[2] ? -pv : 0.0);
        }
      }
    }
    if (face_size[0])
      for (int z = 0; z < nz; z++)
        for (int y = 0; y < ny; y++)
          extras[0][static_cast<size_t>(z) * ny + y] = p[idx(0, y, z)];
    if (face_size[1])
      for (int z = 0; z < nz; z++)
        for (int x = 0; x < nx; x++)
          extras[1][static_cast<size_t>(z) * nx + x] = p[idx(x, 0, z)];
    if (face_size[2])
      for (int y = 0; y < ny; y++)
        for (int x = 0; x < nx; x++)
          extras[2][static_cast<size_t>(y) * nx + x] = p[idx(x, y, 0)];
  }

  // gather form of K^T, race-free under parallel loops
  void apply_transpose(const std::vector<double>& gx, const std::vector<double>& gy,
                       const std::vector<double>& gz,
                       const std::array<std::vector<double>, 3>& extras,
                       std::vector<double>& out) const {
    const int nx = dims[0], ny = dims[1], nz = dims[2];
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz; z++) {
      for (int y = 0; y < ny; y++) {
        size_t i = idx(0, y, z);
        for (int x = 0; x < nx; x++, i++) {
          double acc = -gx[i] - gy[i] - gz[i];
          if (x > 0) acc += gx[i - 1];
          if (y > 0) acc += gy[i - nx];
          if (z > 0) acc += gz[i - static_cast<size_t>(nx) * ny];
          out[i] = acc;
        }
      }
    }
    if (face_size[0])
      for (int z = 0; z < nz; z++)
        for (int y = 0; y < ny; y++)
          out[idx(0, y, z)] += extras[0][static_cast<size_t>(z) * ny + y];
    if (face_size[1])
      for (int z = 0; z < nz; z++)
        for (int x = 0; x < nx; x++)
          out[idx(x, 0, z)] += extras[1][static_cast<size_t>(z) * nx + x];
    if (face_size[2])
      for (int y = 0; y < ny; y++)
        for (int x = 0; x < nx; x++)
          out[idx(x, y, 0)] += extras[2][static_cast<size_t>(y) * nx + x];
  }
};

double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double tv_energy(const Field& p, const TvConfig& cfg) {
  cfg.validate();
  const auto bc = boundary_spec(cfg.boundary);
  const int nx = p.dims[0], ny = p.dims[1], nz = p.dims[2];
  double total = 0;
  for (int z = 0; z < nz; z++) {
    for (int y = 0; y < ny; y++) {
      size_t i = p.idx(0, y, z);
      for (int x = 0; x < nx; x++, i++) {
        const double pv = p.v[i];
        const double dx = x + 1 < nx ? p.v[i + 1] - pv : (bc.dirichlet_high[0] ? -pv : 0.0);
        const double dy = y + 1 < ny ? p.v[i + nx] - pv : (bc.dirichlet_high[1] ? -pv : 0.0);
        const double dz = z + 1 < nz ? p.v[i + static_cast<size_t>(nx) * ny] - pv
                                     : (bc.dirichlet_high[2] ? -pv : 0.0);
        total += std::sqrt(dx * dx + dy * dy + dz * dz);
      }
    }
  }
  if (bc.dirichlet_low[0])
    for (int z = 0; z < nz; z++)
      for (int y = 0; y < ny; y++) total += std::abs(p.at(0, y, z));
  if (bc.dirichlet_low[1])
    for (int z = 0; z < nz; z++)
      for (int x = 0; x < nx; x++) total += std::abs(p.at(x, 0, z));
  if (bc.dirichlet_low[2])
    for (int y = 0; y < ny; y++)
      for (int x = 0; x < nx; x++) total += std::abs(p.at(x, y, 0));
  return total;
}

void prox_l2_nonneg_inplace(std::vector<double>& q, double alpha) {
  require(alpha >= 0, "prox_l2_nonneg: alpha must be >= 0");
  const double scale = 1.0 / (1.0 + alpha);
  for (double& x : q) x = std::max(0.0, x * scale);
}

Field prox_l2_nonneg(const Field& q, double alpha) {
  Field out = q;
  prox_l2_nonneg_inplace(out.v, alpha);
  return out;
}

Field tv_denoise(const Field& p, double lambda, const TvConfig& cfg) {
  cfg.validate();
  require(lambda >= 0, "tv_denoise: lambda must be >= 0");
  const TvOperator K(p.dims, cfg.boundary);
  const size_t n = K.n;

  Field q = p;
  if (cfg.nonneg)
    for (double& x : q.v) x = std::max(0.0, x);
  std::vector<double> qbar = q.v, qold(n);
  std::vector<double> gx(n, 0.0), gy(n, 0.0), gz(n, 0.0);
  std::vector<double> yx(n, 0.0), yy(n, 0.0), yz(n, 0.0);
  std::array<std::vector<double>, 3> ge, ye;
  for (int a = 0; a < 3; a++) {
    ge[a].assign(K.face_size[a], 0.0);
    ye[a].assign(K.face_size[a], 0.0);
  }
  std::vector<double> div(n);

  // ||K||^2 <= 12 for the 3D forward-difference operator (all boundary
  // variants); the data term is 1-strongly convex, so the accelerated
  // primal-dual scheme with gamma = 1 applies.
  double tau = 1.0 / std::sqrt(12.0);
  double sigma = 1.0 / std::sqrt(12.0);
  const double gamma = 1.0;

  auto objective = [&](const Field& f) {
    double d = 0;
    for (size_t i = 0; i < n; i++) {
      const double r = f.v[i] - p.v[i];
      d += r * r;
    }
    return 0.5 * d + lambda * tv_energy(f, cfg);
  };

  double last_obj = objective(q);
  for (int it = 1; it <= cfg.pdhg_iters; it++) {
    K.apply(qbar, gx, gy, gz, ge);
    for (size_t i = 0; i < n; i++) {
      double ax = yx[i] + sigma * gx[i];
      double ay = yy[i] + sigma * gy[i];
      double az = yz[i] + sigma * gz[i];
      const double nrm = std::sqrt(ax * ax + ay * ay + az * az);
      if (nrm > lambda) {
        const double s = lambda / nrm;
        ax *= s;
        ay *= s;
        az *= s;
      }
      yx[i] = ax;
      yy[i] = ay;
      yz[i] = az;
    }
    for (int a = 0; a < 3; a++)
      for (size_t i = 0; i < K.face_size[a]; i++)
        ye[a][i] = std::clamp(ye[a][i] + sigma * ge[a][i], -lambda, lambda);

    K.apply_transpose(yx, yy, yz, ye, div);
    qold.swap(q.v);
    const double inv = 1.0 / (1.0 + tau);
    if (cfg.nonneg) {
      for (size_t i = 0; i < n; i++)
        q.v[i] = std::max(0.0, (qold[i] - tau * div[i] + tau * p.v[i]) * inv);
    } else {
      for (size_t i = 0; i < n; i++)
        q.v[i] = (qold[i] - tau * div[i] + tau * p.v[i]) * inv;
    }

    const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * tau);
    tau *= theta;
    sigma /= theta;
    for (size_t i = 0; i < n; i++) qbar[i] = q.v[i] + theta * (q.v[i] - qold[i]);

    if (it % 20 == 0 || it == cfg.pdhg_iters) {
      const double obj = objective(q);
      if (std::abs(last_obj - obj) <= cfg.pdhg_tol * std::max(std::abs(obj), 1e-30))
        break;
      last_obj = obj;
    }
  }
  return q;
}

double power_iteration(const std::function<void(const std::vector<double>&, std::vector<double>&)>& op,
                       size_t dim, int n_iters, double tol, uint64_t seed) {
  require(dim >= 1, "power_iteration: dim must be >= 1");
  require(n_iters >= 1, "power_iteration: n_iters must be >= 1");
  Rng rng(seed);
  std::vector<double> v(dim), w(dim);
  for (double& x : v) x = rng.normal();
  double nv = norm2(v);
  if (nv == 0) v[0] = 1, nv = 1;
  for (double& x : v) x /= nv;

  double lam = 0;
  for (int it = 0; it < n_iters; it++) {
    op(v, w);
    double rayleigh = 0;
    for (size_t i = 0; i < dim; i++) rayleigh += v[i] * w[i];
    const double nw = norm2(w);
    if (nw == 0) return 0.0;  // zero operator
    for (size_t i = 0; i < dim; i++) v[i] = w[i] / nw;
    if (it > 0 && std::abs(rayleigh - lam) <= tol * std::abs(rayleigh)) return rayleigh;
    lam = rayleigh;
  }
  return lam;
}

FistaResult fista(const FistaProblem& problem, double lipschitz,
                  const FistaConfig& cfg, const std::vector<double>& x0) {
  cfg.validate();
  require(lipschitz > 0, "fista: Lipschitz constant must be positive");
  require(problem.data != nullptr, "fista: data missing");
  require(x0.size() == problem.n, "fista: x0 size mismatch");
  const std::vector<double>& f = *problem.data;
  require(f.size() == problem.m, "fista: data size mismatch");
  const double eta = cfg.step_scale / lipschitz;
  const double rel_eps = 1e-12;

  auto data_term = [&](const std::vector<double>& z, double* res_norm) {
    double s = 0;
    for (size_t i = 0; i < problem.m; i++) {
      const double r = z[i] - f[i];
      s += r * r;
    }
    if (res_norm) *res_norm = std::sqrt(s);
    return 0.5 * s;
  };

  std::vector<double> x = x0, z_x(problem.m);
  problem.forward(x, z_x);
  double res = 0;
  double E_prev = data_term(z_x, &res) + problem.lambda * problem.reg(x);

  std::vector<double> y = x, z_y = z_x;
  std::vector<double> g(problem.n), x_new(problem.n), z_new(problem.m), r(problem.m);
  double t = 1.0;

  FistaResult result;
  result.x = x;
  result.kx = z_x;
  result.objective = E_prev;
  result.residual_norm = res;
  double min_E = E_prev;
  int stall = 0;
  result.stop_reason = "max_iters";

  auto take_step = [&](const std::vector<double>& base, const std::vector<double>& z_base,
                       double step) {
    for (size_t i = 0; i < problem.m; i++) r[i] = z_base[i] - f[i];
    problem.adjoint(r, g);
    for (size_t i = 0; i < problem.n; i++) x_new[i] = base[i] - step * g[i];
    problem.prox(x_new, step * problem.lambda);
    problem.forward(x_new, z_new);
  };

  for (int k = 1; k <= cfg.max_iters; k++) {
    take_step(y, z_y, eta);
    double res_new = 0;
    double E_new = data_term(z_new, &res_new) + problem.lambda * problem.reg(x_new);

    bool restarted = false;
    int backtracks = 0;
    if (cfg.restart && E_new > E_prev * (1 + rel_eps) + rel_eps) {
      // objective went up: drop the momentum and take a plain gradient step
      // from the previous iterate, halving the step if needed (the halved
      // step applies to this iteration only)
      restarted = true;
      t = 1.0;
      double step = eta;
      take_step(x, z_x, step);
      E_new = data_term(z_new, &res_new) + problem.lambda * problem.reg(x_new);
      while (E_new > E_prev * (1 + rel_eps) + rel_eps && backtracks < cfg.backtrack_max) {
        step *= 0.5;
        backtracks++;
        take_step(x, z_x, step);
        E_new = data_term(z_new, &res_new) + problem.lambda * problem.reg(x_new);
      }
    }
    if (!std::isfinite(E_new))
      throw NumericalError("fista: non-finite objective at iteration " + std::to_string(k));

    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_new;
    double step_sq = 0;
    for (size_t i = 0; i < problem.n; i++) {
      const double d = x_new[i] - x[i];
      step_sq += d * d;
      y[i] = x_new[i] + beta * d;
    }
    for (size_t i = 0; i < problem.m; i++)
      z_y[i] = (1.0 + beta) * z_new[i] - beta * z_x[i];

    x.swap(x_new);
    z_x.swap(z_new);
    E_prev = E_new;
    t = t_new;

    result.log.push_back({k, E_new, res_new, restarted, backtracks});
    if (E_new < result.objective) {
      result.x = x;
      result.kx = z_x;
      result.objective = E_new;
      result.residual_norm = res_new;
    }
    if (E_new < min_E * (1 - rel_eps)) {
      min_E = E_new;
      stall = 0;
    } else {
      stall++;
    }

    if (step_sq == 0) {
      result.stop_reason = "iterate_unchanged";
      break;
    }
    if (stall >= cfg.stall_window) {
      result.stop_reason = "objective_stalled";
      break;
    }
  }
  return result;
}

}  // namespace cspat::optim
