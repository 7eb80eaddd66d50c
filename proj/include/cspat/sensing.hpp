#pragma once

#include <cstdint>
#include <vector>

#include "cspat/core.hpp"

namespace cspat::sensing {

enum class Kind { conventional, rsp, gsp, shd };
enum class HadamardMode { bipolar, binary };

// Description of the sub-sampling operator C acting on detection-plane
// values. Point kinds store the selected plane-voxel indices; sHd stores the
// column scrambling permutation and the selected Hadamard row indices.
struct SensingPattern {
  Kind kind = Kind::conventional;
  std::array<int, 2> dims{0, 0};  // (Ny, Nz)
  int m_c = 0;                    // measurements per time step
  uint64_t seed = 0;
  HadamardMode mode = HadamardMode::bipolar;  // sHd only
  std::vector<int> selection;    // point kinds: plane-voxel indices
  std::vector<int> permutation;  // sHd: column scrambling sigma
  std::vector<int> rows;         // sHd: selected row indices

  size_t n_locations() const { return static_cast<size_t>(dims[0]) * dims[1]; }
  double subsampling_factor() const {
    return static_cast<double>(n_locations()) / m_c;
  }
  void validate() const;
};

// Compressed measurements f^c, trace-major storage: values[m*nt + t].
struct SensorData {
  int m_c = 0;
  int nt = 0;
  std::vector<double> v;
  double noise_sigma = 0.0;

  SensorData() = default;
  SensorData(int m, int nt_) : m_c(m), nt(nt_), v(static_cast<size_t>(m) * nt_, 0.0) {}
  double* trace(int m) { return v.data() + static_cast<size_t>(m) * nt; }
  const double* trace(int m) const { return v.data() + static_cast<size_t>(m) * nt; }
};

// Full conventional scan: every plane location in natural order.
SensingPattern make_conventional_pattern(std::array<int, 2> plane_dims);

// m_c distinct locations drawn uniformly without replacement.
SensingPattern make_rsp_pattern(std::array<int, 2> plane_dims, int m_c, uint64_t seed);

// Every stride-th location in y and z, anchored at index 0.
SensingPattern make_gsp_pattern(std::array<int, 2> plane_dims, int stride);

// Scrambled Hadamard pattern: implicit Sylvester Hadamard matrix with a
// seeded column permutation; m_c selected rows. The row derived from the
// all-ones row is excluded whenever m_c < M (its measurement is the plane
// sum, which demeaning removes).
SensingPattern make_shd_pattern(std::array<int, 2> plane_dims, int m_c,
                                uint64_t seed, HadamardMode mode);

// Unnormalized fast Walsh-Hadamard transform; applying twice yields 2^n * v.
void fwht(std::vector<double>& v);

// Apply the sensing operator C to a full plane record.
SensorData apply_sensing(const SensingPattern& pattern, const PlaneSeries& series);

// Exact transpose C^T of apply_sensing (zero-filling for point kinds).
PlaneSeries adjoint_sensing(const SensingPattern& pattern, const SensorData& data);

// m_sub disjoint rSP patterns whose union covers all locations exactly once,
// for frame-wise acquisition.
std::vector<SensingPattern> partition_patterns(std::array<int, 2> plane_dims,
                                               int m_sub, uint64_t seed);

}  // namespace cspat::sensing
