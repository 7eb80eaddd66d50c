#include "cspat/sensing.hpp"

#include <algorithm>
#include <numeric>

namespace cspat::sensing {

namespace {

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Sylvester ordering: row r of the scrambled matrix has weight M if r == 0
// (all ones), otherwise M/2 ones; column permutation does not change this.
double row_weight(int row, size_t m) {
  return row == 0 ? static_cast<double>(m) : static_cast<double>(m) / 2.0;
}

}  // namespace

void SensingPattern::validate() const {
  const size_t m = n_locations();
  require(dims[0] > 0 && dims[1] > 0, "pattern plane dims must be positive");
  require(m_c >= 1 && static_cast<size_t>(m_c) <= m, "m_c must be in [1, M]");
  if (kind == Kind::shd) {
    require(is_pow2(m), "sHd requires N_y*N_z to be a power of two");
    require(permutation.size() == m, "sHd permutation size mismatch");
    require(rows.size() == static_cast<size_t>(m_c), "sHd rows size mismatch");
  } else {
    require(selection.size() == static_cast<size_t>(m_c), "selection size mismatch");
    std::vector<char> seen(m, 0);
    for (int s : selection) {
      require(s >= 0 && static_cast<size_t>(s) < m, "selection index out of range");
      require(!seen[s], "selection indices must be distinct");
      seen[s] = 1;
    }
  }
}

SensingPattern make_conventional_pattern(std::array<int, 2> plane_dims) {
  SensingPattern p;
  p.kind = Kind::conventional;
  p.dims = plane_dims;
  p.m_c = plane_dims[0] * plane_dims[1];
  p.selection.resize(p.m_c);
  std::iota(p.selection.begin(), p.selection.end(), 0);
  p.validate();
  return p;
}

SensingPattern make_rsp_pattern(std::array<int, 2> plane_dims, int m_c, uint64_t seed) {
  const size_t m = static_cast<size_t>(plane_dims[0]) * plane_dims[1];
  require(m_c >= 1 && static_cast<size_t>(m_c) <= m, "rSP: m_c must be in [1, M]");
  SensingPattern p;
  p.kind = Kind::rsp;
  p.dims = plane_dims;
  p.m_c = m_c;
  p.seed = seed;
  std::vector<int> all(m);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed);
  rng.shuffle(all);
  p.selection.assign(all.begin(), all.begin() + m_c);
  p.validate();
  return p;
}

SensingPattern make_gsp_pattern(std::array<int, 2> plane_dims, int stride) {
  require(stride >= 1, "gSP: stride must be >= 1");
  require(plane_dims[0] % stride == 0 && plane_dims[1] % stride == 0,
          "gSP: stride must divide both plane dims");
  SensingPattern p;
  p.kind = Kind::gsp;
  p.dims = plane_dims;
  p.m_c = (plane_dims[0] / stride) * (plane_dims[1] / stride);
  for (int z = 0; z < plane_dims[1]; z += stride)
    for (int y = 0; y < plane_dims[0]; y += stride)
      p.selection.push_back(z * plane_dims[0] + y);
  p.validate();
  return p;
}

SensingPattern make_shd_pattern(std::array<int, 2> plane_dims, int m_c,
                                uint64_t seed, HadamardMode mode) {
  const size_t m = static_cast<size_t>(plane_dims[0]) * plane_dims[1];
  require(is_pow2(m), "sHd requires N_y*N_z to be a power of two");
  require(m_c >= 1 && static_cast<size_t>(m_c) <= m, "sHd: m_c must be in [1, M]");
  SensingPattern p;
  p.kind = Kind::shd;
  p.dims = plane_dims;
  p.m_c = m_c;
  p.seed = seed;
  p.mode = mode;

  Rng rng(seed);
  p.permutation.resize(m);
  std::iota(p.permutation.begin(), p.permutation.end(), 0);
  rng.shuffle(p.permutation);

  if (static_cast<size_t>(m_c) == m) {
    p.rows.resize(m);
    std::iota(p.rows.begin(), p.rows.end(), 0);
  } else {
    // uniform subset of {1, ..., M-1}: the all-ones row is excluded
    std::vector<int> candidates(m - 1);
    std::iota(candidates.begin(), candidates.end(), 1);
    rng.shuffle(candidates);
    p.rows.assign(candidates.begin(), candidates.begin() + m_c);
  }
  p.validate();
  return p;
}

void fwht(std::vector<double>& v) {
  const size_t n = v.size();
  require(is_pow2(n), "fwht requires a power-of-two length");
  for (size_t h = 1; h < n; h *= 2) {
    for (size_t i = 0; i < n; i += 2 * h) {
      for (size_t j = i; j < i + h; j++) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
}

SensorData apply_sensing(const SensingPattern& pattern, const PlaneSeries& series) {
  pattern.validate();
  require(pattern.dims[0] == series.dims[0] && pattern.dims[1] == series.dims[1],
          "apply_sensing: plane dims mismatch");
  const int nt = series.nt;
  SensorData out(pattern.m_c, nt);
  out.noise_sigma = 0.0;

  if (pattern.kind != Kind::shd) {
    for (int m = 0; m < pattern.m_c; m++) {
      const double* src = series.trace(pattern.selection[m]);
      std::copy(src, src + nt, out.trace(m));
    }
    return out;
  }

  const size_t m = pattern.n_locations();
  std::vector<double> w(m);
  for (int t = 0; t < nt; t++) {
    // scatter by the scrambling permutation, then one fast transform gives
    // every Hadamard row product at this time step
    for (size_t c = 0; c < m; c++)
      w[pattern.permutation[c]] = series.v[c * nt + t];
    double plane_sum = 0;
    for (size_t c = 0; c < m; c++) plane_sum += w[c];
    fwht(w);
    if (pattern.mode == HadamardMode::bipolar) {
      for (int r = 0; r < pattern.m_c; r++)
        out.v[static_cast<size_t>(r) * nt + t] = w[pattern.rows[r]];
    } else {
      // binary rows (h+1)/2, demeaned by (row weight) * (plane mean);
      // this makes binary output exactly half the bipolar output
      const double mean = plane_sum / static_cast<double>(m);
      for (int r = 0; r < pattern.m_c; r++) {
        const double y_bin = 0.5 * (w[pattern.rows[r]] + plane_sum);
        out.v[static_cast<size_t>(r) * nt + t] =
            y_bin - row_weight(pattern.rows[r], m) * mean;
      }
    }
  }
  return out;
}

PlaneSeries adjoint_sensing(const SensingPattern& pattern, const SensorData& data) {
  pattern.validate();
  require(data.m_c == pattern.m_c, "adjoint_sensing: m_c mismatch");
  const int nt = data.nt;
  PlaneSeries out(pattern.dims[0], pattern.dims[1], nt);

  if (pattern.kind != Kind::shd) {
    for (int m = 0; m < pattern.m_c; m++) {
      const double* src = data.trace(m);
      double* dst = out.trace(pattern.selection[m]);
      std::copy(src, src + nt, dst);
    }
    return out;
  }

  const size_t m = pattern.n_locations();
  std::vector<double> z(m);
  for (int t = 0; t < nt; t++) {
    std::fill(z.begin(), z.end(), 0.0);
    double y_sum = 0, wy_sum = 0;
    for (int r = 0; r < pattern.m_c; r++) {
      const double y = data.v[static_cast<size_t>(r) * nt + t];
      z[pattern.rows[r]] += y;
      y_sum += y;
      wy_sum += row_weight(pattern.rows[r], m) * y;
    }
    fwht(z);  // Sylvester Hadamard is symmetric, H^T = H
    if (pattern.mode == HadamardMode::bipolar) {
      for (size_t c = 0; c < m; c++)
        out.v[c * nt + t] = z[pattern.permutation[c]];
    } else {
      // transpose of the demeaned binary operator B = (H_s + 1)/2 - w 1^T/M
      const double offset = 0.5 * y_sum - wy_sum / static_cast<double>(m);
      for (size_t c = 0; c < m; c++)
        out.v[c * nt + t] = 0.5 * z[pattern.permutation[c]] + offset;
    }
  }
  return out;
}

std::vector<SensingPattern> partition_patterns(std::array<int, 2> plane_dims,
                                               int m_sub, uint64_t seed) {
  const size_t m = static_cast<size_t>(plane_dims[0]) * plane_dims[1];
  require(m_sub >= 1, "partition: m_sub must be >= 1");
  require(m % m_sub == 0, "partition: m_sub must divide M");
  const size_t chunk = m / m_sub;
  std::vector<int> all(m);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed);
  rng.shuffle(all);
  std::vector<SensingPattern> out;
  out.reserve(m_sub);
  for (int i = 0; i < m_sub; i++) {
    SensingPattern p;
    p.kind = Kind::rsp;
    p.dims = plane_dims;
    p.m_c = static_cast<int>(chunk);
    p.seed = seed;
    p.selection.assign(all.begin() + i * chunk, all.begin() + (i + 1) * chunk);
    p.validate();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace cspat::sensing
