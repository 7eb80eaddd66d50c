#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numeric>
#include <set>

#include "cspat/sensing.hpp"

using namespace cspat;
using namespace cspat::sensing;

namespace {

// dense scrambled-Hadamard row, independent of the fwht path
std::vector<double> dense_shd_row(const SensingPattern& p, int r) {
  const size_t m = p.n_locations();
  std::vector<double> row(m);
  for (size_t c = 0; c < m; c++) {
    const unsigned long long bits =
        static_cast<unsigned long long>(p.rows[r]) & static_cast<unsigned long long>(p.permutation[c]);
    row[c] = __builtin_parityll(bits) ? -1.0 : 1.0;
  }
  return row;
}

PlaneSeries random_series(int ny, int nz, int nt, uint64_t seed) {
  PlaneSeries s(ny, nz, nt);
  Rng rng(seed);
  for (double& v : s.v) v = rng.normal();
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); i++) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("rsp pattern basics") {
  auto full = make_rsp_pattern({8, 8}, 64, 3);
  std::set<int> sel(full.selection.begin(), full.selection.end());
  CHECK(sel.size() == 64);  // m_c = M is a permutation of all locations
  CHECK(*sel.begin() == 0);
  CHECK(*sel.rbegin() == 63);

  auto p = make_rsp_pattern({128, 128}, 128, 1);
  CHECK(p.m_c == 128);
  CHECK(p.subsampling_factor() == doctest::Approx(128.0));

  auto p2 = make_rsp_pattern({128, 128}, 128, 1);
  CHECK(p.selection == p2.selection);  // determinism per seed

  CHECK_THROWS_AS(make_rsp_pattern({4, 4}, 17, 1), ValidationError);
}

TEST_CASE("gsp pattern") {
  auto all = make_gsp_pattern({8, 8}, 1);
  CHECK(all.m_c == 64);

  auto coarse = make_gsp_pattern({128, 128}, 2);
  CHECK(coarse.m_c == 4096);

  auto g16 = make_gsp_pattern({128, 128}, 4);
  CHECK(g16.m_c == 1024);

  CHECK_THROWS_AS(make_gsp_pattern({10, 10}, 3), ValidationError);
}

TEST_CASE("shd pattern construction") {
  // full pattern set keeps every row, including the all-ones one
  auto full = make_shd_pattern({128, 128}, 16384, 1, HadamardMode::bipolar);
  CHECK(full.rows.size() == 16384);

  auto p = make_shd_pattern({4, 4}, 8, 5, HadamardMode::bipolar);
  for (int r : p.rows) CHECK(r != 0);  // all-ones row excluded when m_c < M

  // bipolar rows other than the all-ones one sum to zero
  for (int r = 0; r < p.m_c; r++) {
    auto row = dense_shd_row(p, r);
    CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(0.0));
  }

  CHECK_THROWS_AS(make_shd_pattern({3, 4}, 4, 1, HadamardMode::bipolar), ValidationError);
}

TEST_CASE("shd orthogonality H Ht = M I, dense oracle") {
  auto p = make_shd_pattern({4, 2}, 8, 9, HadamardMode::bipolar);
  const size_t m = 8;
  for (int r1 = 0; r1 < p.m_c; r1++) {
    auto row1 = dense_shd_row(p, r1);
    for (int r2 = 0; r2 < p.m_c; r2++) {
      auto row2 = dense_shd_row(p, r2);
      const double d = dot(row1, row2);
      CHECK(d == doctest::Approx(r1 == r2 ? static_cast<double>(m) : 0.0));
    }
  }
}

TEST_CASE("fwht") {
  std::vector<double> e0(8, 0.0);
  e0[0] = 1.0;
  fwht(e0);
  for (double v : e0) CHECK(v == doctest::Approx(1.0));

  Rng rng(7);
  std::vector<double> v(8);
  for (double& x : v) x = rng.normal();
  auto w = v;
  fwht(w);
  fwht(w);
  for (size_t i = 0; i < v.size(); i++) CHECK(w[i] == doctest::Approx(8.0 * v[i]));

  // dense Hadamard multiply oracle, length 16
  std::vector<double> u(16);
  for (double& x : u) x = rng.normal();
  auto fast = u;
  fwht(fast);
  for (int r = 0; r < 16; r++) {
    double acc = 0;
    for (int c = 0; c < 16; c++)
      acc += (__builtin_parity(static_cast<unsigned>(r & c)) ? -1.0 : 1.0) * u[c];
    CHECK(fast[r] == doctest::Approx(acc).epsilon(1e-12));
  }

  std::vector<double> bad(6, 1.0);
  CHECK_THROWS_AS(fwht(bad), ValidationError);
}

TEST_CASE("apply_sensing point kinds") {
  auto series = random_series(4, 4, 5, 11);
  auto conv = make_conventional_pattern({4, 4});
  auto data = apply_sensing(conv, series);
  for (size_t i = 0; i < series.v.size(); i++) CHECK(data.v[i] == series.v[i]);

  auto rsp = make_rsp_pattern({4, 4}, 6, 2);
  auto sub = apply_sensing(rsp, series);
  for (int m = 0; m < 6; m++)
    for (int t = 0; t < 5; t++) CHECK(sub.trace(m)[t] == series.trace(rsp.selection[m])[t]);
}

TEST_CASE("shd apply: constant plane gives zero for bipolar rows") {
  PlaneSeries series(4, 4, 3);
  for (size_t p = 0; p < series.n_traces(); p++)
    for (int t = 0; t < 3; t++) series.trace(p)[t] = 2.5 + t;
  auto pat = make_shd_pattern({4, 4}, 8, 3, HadamardMode::bipolar);
  auto data = apply_sensing(pat, series);
  for (double v : data.v) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("shd fast path equals dense matrix multiply, M = 16") {
  auto series = random_series(4, 4, 4, 13);
  for (auto mode : {HadamardMode::bipolar, HadamardMode::binary}) {
    auto pat = make_shd_pattern({4, 4}, 7, 17, mode);
    auto fast = apply_sensing(pat, series);
    const size_t m = 16;
    for (int t = 0; t < 4; t++) {
      std::vector<double> v(m);
      for (size_t c = 0; c < m; c++) v[c] = series.v[c * 4 + t];
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / m;
      for (int r = 0; r < pat.m_c; r++) {
        auto row = dense_shd_row(pat, r);
        double acc = 0;
        if (mode == HadamardMode::bipolar) {
          acc = dot(row, v);
        } else {
          double w = 0;
          for (size_t c = 0; c < m; c++) {
            const double b = (row[c] + 1.0) / 2.0;
            acc += b * v[c];
            w += b;
          }
          acc -= w * mean;
        }
        CHECK(fast.v[static_cast<size_t>(r) * 4 + t] == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("binary mode equals half of bipolar mode after demeaning") {
  auto series = random_series(8, 8, 6, 21);
  auto bip = make_shd_pattern({8, 8}, 20, 5, HadamardMode::bipolar);
  auto bin = make_shd_pattern({8, 8}, 20, 5, HadamardMode::binary);
  REQUIRE(bip.rows == bin.rows);  // same seed selects the same rows
  auto d_bip = apply_sensing(bip, series);
  auto d_bin = apply_sensing(bin, series);
  for (size_t i = 0; i < d_bip.v.size(); i++) {
    CHECK(d_bin.v[i] == doctest::Approx(0.5 * d_bip.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("adjoint_sensing transpose identity, all kinds") {
  const int nt = 4;
  auto series = random_series(8, 8, nt, 31);
  std::vector<SensingPattern> pats = {
      make_conventional_pattern({8, 8}),
      make_rsp_pattern({8, 8}, 16, 7),
      make_gsp_pattern({8, 8}, 2),
      make_shd_pattern({8, 8}, 16, 7, HadamardMode::bipolar),
      make_shd_pattern({8, 8}, 16, 7, HadamardMode::binary),
  };
  Rng rng(41);
  for (const auto& pat : pats) {
    SensorData y(pat.m_c, nt);
    for (double& v : y.v) v = rng.normal();
    auto cx = apply_sensing(pat, series);
    auto cty = adjoint_sensing(pat, y);
    const double lhs = dot(cx.v, y.v);
    const double rhs = dot(series.v, cty.v);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0));
  }
}

TEST_CASE("adjoint_sensing point kind zero fill and CtC identity") {
  auto rsp = make_rsp_pattern({4, 4}, 5, 3);
  SensorData y(5, 3);
  for (double& v : y.v) v = 1.0;
  auto s = adjoint_sensing(rsp, y);
  std::set<int> sel(rsp.selection.begin(), rsp.selection.end());
  for (size_t p = 0; p < s.n_traces(); p++)
    for (int t = 0; t < 3; t++)
      CHECK(s.trace(p)[t] == (sel.count(static_cast<int>(p)) ? 1.0 : 0.0));

  // conventional full pattern: C^T C = identity
  auto conv = make_conventional_pattern({4, 4});
  auto series = random_series(4, 4, 3, 5);
  auto rt = adjoint_sensing(conv, apply_sensing(conv, series));
  for (size_t i = 0; i < series.v.size(); i++) CHECK(rt.v[i] == series.v[i]);
}

TEST_CASE("partition_patterns") {
  auto single = partition_patterns({4, 4}, 1, 9);
  CHECK(single.size() == 1);
  CHECK(single[0].m_c == 16);

  // union covers the grid exactly once, pairwise disjoint (several seeds)
  for (uint64_t seed : {1ULL, 2ULL, 3ULL, 99ULL}) {
    auto parts = partition_patterns({8, 4}, 4, seed);
    CHECK(parts.size() == 4);
    std::set<int> all;
    size_t total = 0;
    for (const auto& p : parts) {
      CHECK(p.m_c == 8);
      all.insert(p.selection.begin(), p.selection.end());
      total += p.selection.size();
    }
    CHECK(all.size() == 32);
    CHECK(total == 32);
  }

  // 132 x 132 grid partitioned four ways: 4356 locations each
  auto knot = partition_patterns({132, 132}, 4, 1);
  CHECK(knot.size() == 4);
  for (const auto& p : knot) CHECK(p.m_c == 4356);

  CHECK_THROWS_AS(partition_patterns({4, 4}, 3, 1), ValidationError);
}
