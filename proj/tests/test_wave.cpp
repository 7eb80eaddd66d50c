#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cspat/wave.hpp"

using namespace cspat;
using namespace cspat::wave;

namespace {

Grid make_grid(int nx, int ny, int nz, int nt, double c = 1500.0, int pml = 10) {
  Grid g;
  g.dims = {nx, ny, nz};
  const double d = 156.25e-6;
  g.spacing = {d, d, d};
  g.sound_speed = c;
  g.dt = kCflLimit * d / c;
  g.nt = nt;
  g.pml_thickness = pml;
  return g;
}

Field random_field(const Grid& g, uint64_t seed) {
  Field f(g.dims);
  Rng rng(seed);
  for (double& v : f.v) v = rng.normal();
  return f;
}

PlaneSeries random_series(const Grid& g, uint64_t seed) {
  PlaneSeries s(g.dims[1], g.dims[2], g.nt);
  Rng rng(seed);
  for (double& v : s.v) v = rng.normal();
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); i++) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

Field gaussian_blob(const Grid& g, double cx, double cy, double cz, double width,
                    double amplitude = 1.0) {
  Field f(g.dims);
  for (int z = 0; z < g.dims[2]; z++)
    for (int y = 0; y < g.dims[1]; y++)
      for (int x = 0; x < g.dims[0]; x++) {
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        f.at(x, y, z) = amplitude * std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * width * width));
      }
  return f;
}

Field heterogeneous_c(const Grid& g, double c0, double rel) {
  Field c(g.dims);
  for (int z = 0; z < g.dims[2]; z++)
    for (int y = 0; y < g.dims[1]; y++)
      for (int x = 0; x < g.dims[0]; x++)
        c.at(x, y, z) = c0 * (1.0 + rel * std::sin(2.0 * M_PI * x / g.dims[0]) *
                                        std::cos(2.0 * M_PI * (y + z) / g.dims[1]));
  return c;
}

double adjoint_dot_error(const Grid& g, uint64_t seed) {
  WaveEngine engine(g, Dtype::f64);
  Field x = random_field(g, seed);
  PlaneSeries y = random_series(g, seed + 1);
  PlaneSeries ax = engine.forward(x);
  Field aty = engine.adjoint(y);
  const double lhs = dot(ax.v, y.v);
  const double rhs = dot(x.v, aty.v);
  return std::abs(lhs - rhs) / (norm(ax.v) * norm(y.v));
}

}  // namespace

TEST_CASE("nyquist_limits") {
  auto a = nyquist_limits(1500.0, 4.8e6);
  CHECK(a.delta_r == doctest::Approx(156.25e-6).epsilon(1e-12));
  auto b = nyquist_limits(1540.0, 20e6);
  CHECK(b.delta_r == doctest::Approx(38.5e-6).epsilon(1e-12));
  auto c = nyquist_limits(1.0, 0.5);
  CHECK(c.delta_r == doctest::Approx(1.0));
  CHECK(c.delta_t == doctest::Approx(1.0));
  CHECK_THROWS_AS(nyquist_limits(-1.0, 1.0), ValidationError);
  CHECK_THROWS_AS(nyquist_limits(1.0, 0.0), ValidationError);
}

TEST_CASE("grid validation") {
  auto g = make_grid(16, 16, 16, 10);
  g.validate();
  auto bad = g;
  bad.dt = 2.0 * g.dt;  // violates the stability bound
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = g;
  bad.dims[0] = 4;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = g;
  bad.sound_speed = -5.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("forward: zero input gives zero output") {
  auto g = make_grid(16, 16, 16, 24);
  Field zero(g.dims);
  auto out = forward(zero, g);
  for (double v : out.v) CHECK(v == 0.0);
}

TEST_CASE("forward: y-z swap symmetry on an isotropic cubic grid") {
  auto g = make_grid(16, 16, 16, 24);
  Field p0(g.dims);
  Rng rng(5);
  for (int z = 0; z < 16; z++)
    for (int y = 0; y < 16; y++)
      for (int x = 0; x < 16; x++)
        if (y <= z) p0.at(x, y, z) = rng.normal();
  for (int z = 0; z < 16; z++)
    for (int y = 0; y < 16; y++)
      for (int x = 0; x < 16; x++)
        if (y > z) p0.at(x, y, z) = p0.at(x, z, y);

  auto out = forward(p0, g);
  double max_rel = 0, scale = 0;
  for (double v : out.v) scale = std::max(scale, std::abs(v));
  for (int z = 0; z < 16; z++)
    for (int y = 0; y < 16; y++)
      for (int t = 0; t < g.nt; t++) {
        const double a = out.v[(static_cast<size_t>(z) * 16 + y) * g.nt + t];
        const double b = out.v[(static_cast<size_t>(y) * 16 + z) * g.nt + t];
        max_rel = std::max(max_rel, std::abs(a - b) / scale);
      }
  CHECK(max_rel <= 1e-12);
}

TEST_CASE("forward linearity") {
  auto g = make_grid(16, 16, 16, 20);
  WaveEngine engine(g, Dtype::f64);
  Field x = random_field(g, 7), y = random_field(g, 8);
  const double a = 1.7, b = -0.6;
  Field combo(g.dims);
  for (size_t i = 0; i < combo.size(); i++) combo.v[i] = a * x.v[i] + b * y.v[i];
  auto fx = engine.forward(x);
  auto fy = engine.forward(y);
  auto fc = engine.forward(combo);
  double num = 0, den = 0;
  for (size_t i = 0; i < fc.size(); i++) {
    const double want = a * fx.v[i] + b * fy.v[i];
    num += (fc.v[i] - want) * (fc.v[i] - want);
    den += want * want;
  }
  CHECK(std::sqrt(num / den) <= 1e-12);
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
  auto g = make_grid(16, 16, 16, 16);
  Field x = random_field(g, 9);
  auto a = forward(x, g);
  auto b = forward(x, g);
  CHECK(a.v == b.v);
  WaveEngine engine(g, Dtype::f64);
  auto c = engine.forward(x);
  auto d = engine.forward(x);
  CHECK(c.v == d.v);
}

TEST_CASE("adjoint: zero series gives zero field") {
  auto g = make_grid(16, 16, 16, 16);
  PlaneSeries zero(16, 16, 16);
  auto out = adjoint(zero, g);
  for (double v : out.v) CHECK(v == 0.0);
}

TEST_CASE("adjoint dot-product identity, homogeneous and heterogeneous") {
  auto g24 = make_grid(24, 24, 24, 40);
  CHECK(adjoint_dot_error(g24, 11) <= 1e-10);

  auto het = make_grid(16, 16, 16, 32);
  het.sound_speed = heterogeneous_c(het, 1500.0, 0.08);
  het.dt = kCflLimit * het.spacing[0] / het.max_c();
  CHECK(adjoint_dot_error(het, 13) <= 1e-10);
}

TEST_CASE("adjoint equals densely probed transpose on an 8x8x8 grid") {
  auto g = make_grid(8, 8, 8, 10, 1500.0, 4);
  WaveEngine engine(g, Dtype::f64);
  const size_t n = g.n_voxels();

  // probe the full matrix A column by column
  std::vector<std::vector<double>> columns(n);
  for (size_t i = 0; i < n; i++) {
    Field e(g.dims);
    e.v[i] = 1.0;
    columns[i] = engine.forward(e).v;
  }

  // a few unit impulses in data space
  for (auto [s, tau] : {std::pair<int, int>{0, 0}, {13, 3}, {63, 9}, {40, 5}}) {
    PlaneSeries y(8, 8, g.nt);
    y.v[static_cast<size_t>(s) * g.nt + tau] = 1.0;
    Field aty = engine.adjoint(y);
    for (size_t i = 0; i < n; i++) {
      const double want = columns[i][static_cast<size_t>(s) * g.nt + tau];
      CHECK(std::abs(aty.v[i] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("time_reverse: zero data and linearity") {
  auto g = make_grid(16, 16, 16, 20);
  PlaneSeries zero(16, 16, 16);
  zero.nt = 20;
  zero.v.assign(16 * 16 * 20, 0.0);
  auto out = time_reverse(zero, g);
  for (double v : out.v) CHECK(v == 0.0);

  WaveEngine engine(g, Dtype::f64);
  auto s = random_series(g, 15);
  PlaneSeries s2 = s;
  for (double& v : s2.v) v *= 2.0;
  auto r1 = engine.time_reverse(s);
  auto r2 = engine.time_reverse(s2);
  for (size_t i = 0; i < r1.size(); i++)
    CHECK(r2.v[i] == doctest::Approx(2.0 * r1.v[i]).epsilon(1e-13));
}

TEST_CASE("time_reverse recovers a compact source, full plane data") {
  const int n = 48;
  auto g = make_grid(n, n, n, 150);
  Field p0 = gaussian_blob(g, 16, n / 2.0, n / 2.0, 2.5);
  WaveEngine engine(g, Dtype::f64);
  auto series = engine.forward(p0);
  auto rec = engine.time_reverse(series);

  // normalized cross-correlation against the source
  double ma = 0, mb = 0;
  for (size_t i = 0; i < p0.size(); i++) {
    ma += p0.v[i];
    mb += rec.v[i];
  }
  ma /= static_cast<double>(p0.size());
  mb /= static_cast<double>(p0.size());
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < p0.size(); i++) {
    const double a = p0.v[i] - ma, b = rec.v[i] - mb;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  const double ncc = sab / std::sqrt(saa * sbb);
  CHECK(ncc >= 0.8);
}

TEST_CASE("forward: blob trace peaks near d / c") {
  const int n = 32;
  auto g = make_grid(n, n, n, 80);
  const double depth = 10.0;
  Field p0 = gaussian_blob(g, depth, n / 2.0, n / 2.0, 2.0);
  auto series = forward(p0, g);
  // trace at the plane voxel vertically above the blob center
  const size_t trace = (static_cast<size_t>(n / 2) * n + n / 2) * g.nt;
  int argmax = 0;
  double best = -1;
  for (int t = 1; t < g.nt; t++) {
    const double v = series.v[trace + t];
    if (v > best) {
      best = v;
      argmax = t;
    }
  }
  const double t_peak = argmax * g.dt;
  const double t_expect = depth * g.spacing[0] / 1500.0;
  CHECK(std::abs(t_peak - t_expect) <= 0.15 * t_expect);
}

TEST_CASE("absorbing layer: residual amplitude below 1 percent") {
  const int n = 32;
  auto g = make_grid(n, n, n, 220);  // long enough for several traversals
  Field p0 = gaussian_blob(g, n / 2.0, n / 2.0, n / 2.0, 2.0);
  WaveEngine engine(g, Dtype::f64);

  // record the full field at the end by probing with time reversal machinery:
  // instead run forward and look at the final plane record amplitudes over
  // the tail of the simulation
  auto series = engine.forward(p0);
  double peak = 0;
  for (double v : series.v) peak = std::max(peak, std::abs(v));
  // after the direct wave has fully passed (t > 2.2 L / c), only boundary
  // artifacts remain on the plane
  const int t_cut = static_cast<int>(2.2 * n / (kCflLimit));
  REQUIRE(t_cut < g.nt);
  double tail = 0;
  for (size_t p = 0; p < series.n_traces(); p++)
    for (int t = t_cut; t < g.nt; t++)
      tail = std::max(tail, std::abs(series.trace(p)[t]));
  CHECK(tail <= 0.01 * peak);
}

TEST_CASE("input validation") {
  auto g = make_grid(16, 16, 16, 12);
  Field wrong(8, 8, 8);
  CHECK_THROWS_AS(forward(wrong, g), ValidationError);
  Field nan_field(g.dims);
  nan_field.v[0] = std::nan("");
  CHECK_THROWS_AS(forward(nan_field, g), ValidationError);
  PlaneSeries bad(8, 8, 12);
  CHECK_THROWS_AS(adjoint(bad, g), ValidationError);
  CHECK_THROWS_AS(time_reverse(bad, g), ValidationError);
}
