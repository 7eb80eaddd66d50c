#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cspat/optim.hpp"

using namespace cspat;
using namespace cspat::optim;

namespace {

// independent triple-loop TV oracle with explicit ghost handling
double tv_loop_oracle(const Field& p, TvBoundary boundary) {
  const int nx = p.dims[0], ny = p.dims[1], nz = p.dims[2];
  const bool d_all = boundary == TvBoundary::dirichlet_all;
  const bool d_plane = boundary == TvBoundary::dirichlet_detection_plane;
  auto val = [&](int x, int y, int z) -> double {
    if (x >= nx) return d_all ? 0.0 : p.at(nx - 1, y, z);
    if (y >= ny) return d_all ? 0.0 : p.at(x, ny - 1, z);
    if (z >= nz) return d_all ? 0.0 : p.at(x, y, nz - 1);
    return p.at(x, y, z);
  };
  double total = 0;
  for (int z = 0; z < nz; z++)
    for (int y = 0; y < ny; y++)
      for (int x = 0; x < nx; x++) {
        const double c = p.at(x, y, z);
        const double dx = val(x + 1, y, z) - c;
        const double dy = val(x, y + 1, z) - c;
        const double dz = val(x, y, z + 1) - c;
        total += std::sqrt(dx * dx + dy * dy + dz * dz);
      }
  if (d_all || d_plane)
    for (int z = 0; z < nz; z++)
      for (int y = 0; y < ny; y++) total += std::abs(p.at(0, y, z));
  if (d_all) {
    for (int z = 0; z < nz; z++)
      for (int x = 0; x < nx; x++) total += std::abs(p.at(x, 0, z));
    for (int y = 0; y < ny; y++)
      for (int x = 0; x < nx; x++) total += std::abs(p.at(x, y, 0));
  }
  return total;
}

Field random_field(int n, uint64_t seed, bool nonneg = false) {
  Field f(n, n, n);
  Rng rng(seed);
  for (double& v : f.v) v = nonneg ? std::abs(rng.normal()) : rng.normal();
  return f;
}

double denoise_objective(const Field& q, const Field& p, double lambda, const TvConfig& cfg) {
  double d = 0;
  for (size_t i = 0; i < q.size(); i++) {
    const double r = q.v[i] - p.v[i];
    d += r * r;
  }
  return 0.5 * d + lambda * tv_energy(q, cfg);
}

// plain (theta = 1, fixed-step) primal-dual reference for 1D signals,
// structured independently of the production denoiser
std::vector<double> pdhg_1d_reference(const std::vector<double>& p, double lambda,
                                      int iters) {
  const size_t n = p.size();
  std::vector<double> q(n), qb(n), y(n, 0.0), qold(n);
  for (size_t i = 0; i < n; i++) q[i] = std::max(0.0, p[i]);
  qb = q;
  const double tau = 0.49, sigma = 0.49;  // tau*sigma*||K||^2 < 1, ||K||^2 <= 4
  for (int it = 0; it < iters; it++) {
    for (size_t i = 0; i < n; i++) {
      const double g = (i + 1 < n ? qb[i + 1] - qb[i] : 0.0);
      y[i] = std::clamp(y[i] + sigma * g, -lambda, lambda);
    }
    qold = q;
    for (size_t i = 0; i < n; i++) {
      double div = -y[i] + (i > 0 ? y[i - 1] : 0.0);
      q[i] = std::max(0.0, (qold[i] - tau * div + tau * p[i]) / (1.0 + tau));
    }
    for (size_t i = 0; i < n; i++) qb[i] = 2.0 * q[i] - qold[i];
  }
  return q;
}

}  // namespace

TEST_CASE("tv_energy basics") {
  TvConfig cfg;
  Field c(6, 6, 6);
  for (double& v : c.v) v = 3.7;
  CHECK(tv_energy(c, cfg) == doctest::Approx(0.0));

  Field single(7, 7, 7);
  single.at(3, 3, 3) = 1.0;
  CHECK(tv_energy(single, cfg) == doctest::Approx(std::sqrt(3.0) + 3.0).epsilon(1e-14));
}

TEST_CASE("tv_energy matches loop oracle for every boundary variant") {
  auto f = random_field(6, 11);
  for (auto b : {TvBoundary::neumann_all, TvBoundary::dirichlet_all,
                 TvBoundary::dirichlet_detection_plane}) {
    TvConfig cfg;
    cfg.boundary = b;
    const double got = tv_energy(f, cfg);
    const double want = tv_loop_oracle(f, b);
    CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("tv_energy positive homogeneity") {
  auto f = random_field(5, 13);
  TvConfig cfg;
  const double base = tv_energy(f, cfg);
  for (double a : {2.0, 0.5, 7.25}) {
    Field g = f;
    for (double& v : g.v) v *= a;
    CHECK(std::abs(tv_energy(g, cfg) - a * base) <= 1e-12 * a * base);
  }
}

TEST_CASE("prox_l2_nonneg formula") {
  Field q(8, 8, 8);
  q.v[0] = 2.0;
  q.v[1] = -1.0;
  auto r = prox_l2_nonneg(q, 1.0);
  CHECK(r.v[0] == doctest::Approx(1.0));
  CHECK(r.v[1] == doctest::Approx(0.0));

  auto f = random_field(4, 17);
  auto p0 = prox_l2_nonneg(f, 0.0);
  for (size_t i = 0; i < f.size(); i++) CHECK(p0.v[i] == std::max(0.0, f.v[i]));
}

TEST_CASE("prox_l2_nonneg matches projected-gradient oracle") {
  // minimize 1/2||x||^2 + ||x - q||^2 / (2 alpha) over x >= 0
  Rng rng(23);
  for (int trial = 0; trial < 5; trial++) {
    const double alpha = 0.1 + 2.0 * rng.uniform();
    std::vector<double> q(10);
    for (double& v : q) v = rng.normal() * 2.0;
    std::vector<double> x(10, 0.0);
    const double lip = 1.0 + 1.0 / alpha;
    for (int it = 0; it < 20000; it++) {
      for (size_t i = 0; i < x.size(); i++) {
        const double g = x[i] + (x[i] - q[i]) / alpha;
        x[i] = std::max(0.0, x[i] - g / lip);
      }
    }
    Field qf(10, 1, 1);
    std::copy(q.begin(), q.end(), qf.v.begin());
    auto closed = prox_l2_nonneg(qf, alpha);
    for (size_t i = 0; i < x.size(); i++) CHECK(std::abs(closed.v[i] - x[i]) <= 1e-10);
  }
}

TEST_CASE("prox_l2_nonneg is non-expansive") {
  Rng rng(29);
  for (int trial = 0; trial < 20; trial++) {
    const double alpha = 2.0 * rng.uniform();
    Field a(6, 6, 6), b(6, 6, 6);
    for (double& v : a.v) v = rng.normal();
    for (double& v : b.v) v = rng.normal();
    auto pa = prox_l2_nonneg(a, alpha);
    auto pb = prox_l2_nonneg(b, alpha);
    double num = 0, den = 0;
    for (size_t i = 0; i < a.size(); i++) {
      num += (pa.v[i] - pb.v[i]) * (pa.v[i] - pb.v[i]);
      den += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    }
    CHECK(num <= den * (1 + 1e-12));
  }
}

TEST_CASE("tv_denoise trivial cases") {
  TvConfig cfg;
  auto f = random_field(5, 31);
  auto z = tv_denoise(f, 0.0, cfg);
  for (size_t i = 0; i < f.size(); i++) CHECK(z.v[i] == doctest::Approx(std::max(0.0, f.v[i])));

  Field c(6, 6, 6);
  for (double& v : c.v) v = 1.25;
  auto cz = tv_denoise(c, 0.7, cfg);
  for (double v : cz.v) CHECK(v == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("tv_denoise 1D objective matches independent long-run reference") {
  const int n = 32;
  Rng rng(37);
  std::vector<double> sig(n);
  for (int i = 0; i < n; i++)
    sig[i] = (i > 8 && i < 20 ? 1.0 : 0.0) + 0.25 * rng.normal();

  const double lambda = 0.3;
  Field p(n, 1, 1);
  std::copy(sig.begin(), sig.end(), p.v.begin());

  TvConfig cfg;
  cfg.pdhg_iters = 2000;
  cfg.pdhg_tol = 1e-12;
  auto got = tv_denoise(p, lambda, cfg);

  auto ref = pdhg_1d_reference(sig, lambda, 20000);
  Field fref(n, 1, 1);
  std::copy(ref.begin(), ref.end(), fref.v.begin());

  const double obj_got = denoise_objective(got, p, lambda, cfg);
  const double obj_ref = denoise_objective(fref, p, lambda, cfg);
  CHECK(std::abs(obj_got - obj_ref) <= 1e-6 * std::abs(obj_ref));
}

TEST_CASE("tv_denoise output objective never exceeds projected input objective") {
  TvConfig cfg;
  cfg.pdhg_iters = 400;
  for (uint64_t seed : {41ULL, 43ULL, 47ULL}) {
    auto p = random_field(6, seed);
    const double lambda = 0.2 + 0.1 * static_cast<double>(seed % 5);
    auto q = tv_denoise(p, lambda, cfg);
    Field proj = p;
    for (double& v : proj.v) v = std::max(0.0, v);
    CHECK(denoise_objective(q, p, lambda, cfg) <=
          denoise_objective(proj, p, lambda, cfg) * (1 + 1e-12));
  }
}

TEST_CASE("power_iteration") {
  auto identity = [](const std::vector<double>& x, std::vector<double>& out) { out = x; };
  CHECK(power_iteration(identity, 16, 50, 1e-10) == doctest::Approx(1.0));

  auto diag = [](const std::vector<double>& x, std::vector<double>& out) {
    out = x;
    out[0] *= 4.0;
  };
  CHECK(power_iteration(diag, 3, 200, 1e-12) == doctest::Approx(4.0).epsilon(1e-8));

  auto zero = [](const std::vector<double>& x, std::vector<double>& out) {
    out.assign(x.size(), 0.0);
  };
  CHECK(power_iteration(zero, 8, 10, 1e-8) == 0.0);
}

namespace {

struct DenseOp {
  std::vector<double> a;  // m x n row-major
  size_t m, n;
  void forward(const std::vector<double>& x, std::vector<double>& out) const {
    out.assign(m, 0.0);
    for (size_t i = 0; i < m; i++)
      for (size_t j = 0; j < n; j++) out[i] += a[i * n + j] * x[j];
  }
  void adjoint(const std::vector<double>& r, std::vector<double>& out) const {
    out.assign(n, 0.0);
    for (size_t i = 0; i < m; i++)
      for (size_t j = 0; j < n; j++) out[j] += a[i * n + j] * r[i];
  }
};

FistaProblem lasso_problem(const DenseOp& op, const std::vector<double>& f, double lambda) {
  FistaProblem prob;
  prob.n = op.n;
  prob.m = op.m;
  prob.data = &f;
  prob.lambda = lambda;
  prob.forward = [&op](const std::vector<double>& x, std::vector<double>& out) {
    op.forward(x, out);
  };
  prob.adjoint = [&op](const std::vector<double>& r, std::vector<double>& out) {
    op.adjoint(r, out);
  };
  prob.prox = [](std::vector<double>& x, double alpha) {
    for (double& v : x) v = v > alpha ? v - alpha : (v < -alpha ? v + alpha : 0.0);
  };
  prob.reg = [](const std::vector<double>& x) {
    double s = 0;
    for (double v : x) s += std::abs(v);
    return s;
  };
  return prob;
}

}  // namespace

TEST_CASE("fista solves the trivial quadratic") {
  const size_t n = 12;
  std::vector<double> b(n);
  Rng rng(53);
  double bn = 0;
  for (double& v : b) {
    v = rng.normal();
    bn += v * v;
  }
  // the 1.8/L step contracts the objective by 0.64 per iteration on this
  // problem, so 50 iterations reach ~2e-10 of the initial objective
  for (double& v : b) v *= std::sqrt(0.5 / bn);

  FistaProblem prob;
  prob.n = prob.m = n;
  prob.data = &b;
  prob.lambda = 0.0;
  prob.forward = [](const std::vector<double>& x, std::vector<double>& out) { out = x; };
  prob.adjoint = [](const std::vector<double>& r, std::vector<double>& out) { out = r; };
  prob.prox = [](std::vector<double>&, double) {};
  prob.reg = [](const std::vector<double>&) { return 0.0; };

  FistaConfig cfg;
  cfg.max_iters = 50;
  auto res = fista(prob, 1.0, cfg, std::vector<double>(n, 0.0));
  CHECK(res.objective <= 1e-10);
  for (size_t i = 0; i < n; i++) CHECK(res.x[i] == doctest::Approx(b[i]).epsilon(1e-5));
}

TEST_CASE("fista lasso objective matches long-run reference") {
  const size_t m = 20, n = 30;
  DenseOp op;
  op.m = m;
  op.n = n;
  op.a.resize(m * n);
  Rng rng(59);
  for (double& v : op.a) v = rng.normal() / std::sqrt(static_cast<double>(m));
  std::vector<double> f(m);
  for (double& v : f) v = rng.normal();

  auto normal_op = [&op](const std::vector<double>& x, std::vector<double>& out) {
    std::vector<double> t;
    op.forward(x, t);
    op.adjoint(t, out);
  };
  const double lip = 1.01 * power_iteration(normal_op, n, 500, 1e-12);

  std::vector<double> grad0(n);
  op.adjoint(f, grad0);
  double lam_max = 0;
  for (double v : grad0) lam_max = std::max(lam_max, std::abs(v));
  const double lambda = 0.1 * lam_max;

  auto prob = lasso_problem(op, f, lambda);
  FistaConfig cfg;
  cfg.max_iters = 150;
  auto res = fista(prob, lip, cfg, std::vector<double>(n, 0.0));

  FistaConfig ref_cfg;
  ref_cfg.max_iters = 1500;
  ref_cfg.stall_window = 1 << 20;  // run the full budget
  auto ref = fista(prob, lip, ref_cfg, std::vector<double>(n, 0.0));

  CHECK(std::abs(res.objective - ref.objective) <= 1e-5 * std::abs(ref.objective));
}

TEST_CASE("fista log invariants: running minimum and best iterate") {
  const size_t m = 16, n = 24;
  DenseOp op;
  op.m = m;
  op.n = n;
  op.a.resize(m * n);
  Rng rng(61);
  for (double& v : op.a) v = rng.normal();
  std::vector<double> f(m);
  for (double& v : f) v = rng.normal();

  auto normal_op = [&op](const std::vector<double>& x, std::vector<double>& out) {
    std::vector<double> t;
    op.forward(x, t);
    op.adjoint(t, out);
  };
  const double lip = power_iteration(normal_op, n, 500, 1e-12);

  auto prob = lasso_problem(op, f, 0.05);
  FistaConfig cfg;
  cfg.max_iters = 120;
  auto res = fista(prob, lip, cfg, std::vector<double>(n, 0.0));

  double run_min = std::numeric_limits<double>::infinity();
  std::vector<double> mins;
  for (const auto& rec : res.log) {
    run_min = std::min(run_min, rec.objective);
    mins.push_back(run_min);
  }
  for (size_t i = 1; i < mins.size(); i++) CHECK(mins[i] <= mins[i - 1]);
  CHECK(res.objective == doctest::Approx(run_min));
}

TEST_CASE("fista rejects bad configs") {
  FistaProblem prob;
  prob.n = prob.m = 4;
  std::vector<double> f(4, 0.0);
  prob.data = &f;
  prob.forward = [](const std::vector<double>& x, std::vector<double>& out) { out = x; };
  prob.adjoint = [](const std::vector<double>& r, std::vector<double>& out) { out = r; };
  prob.prox = [](std::vector<double>&, double) {};
  prob.reg = [](const std::vector<double>&) { return 0.0; };
  FistaConfig cfg;
  CHECK_THROWS_AS(fista(prob, 0.0, cfg, std::vector<double>(4, 0.0)), ValidationError);
  cfg.step_scale = 2.5;
  CHECK_THROWS_AS(fista(prob, 1.0, cfg, std::vector<double>(4, 0.0)), ValidationError);
}
