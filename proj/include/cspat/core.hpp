#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cspat {

// Raised on malformed inputs (bad dimensions, out-of-range parameters,
// violated preconditions). CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Raised on numerical failures (divergence, non-finite values, bracket
// failures). CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// Stability margin for the time step: dt <= kCflLimit * min(spacing) / max(c).
inline constexpr double kCflLimit = 0.3;

enum class Dtype { f32, f64 };

// Scalar volume on a voxel grid, linearized x-fastest.
struct Field {
  std::array<int, 3> dims{0, 0, 0};  // (Nx, Ny, Nz)
  std::vector<double> v;

  Field() = default;
  Field(int nx, int ny, int nz)
      : dims{nx, ny, nz}, v(static_cast<size_t>(nx) * ny * nz, 0.0) {}
  explicit Field(const std::array<int, 3>& d)
      : dims(d), v(static_cast<size_t>(d[0]) * d[1] * d[2], 0.0) {}

  size_t size() const { return v.size(); }
  size_t idx(int x, int y, int z) const {
    return static_cast<size_t>(x) + static_cast<size_t>(dims[0]) * (y + static_cast<size_t>(dims[1]) * z);
  }
  double& at(int x, int y, int z) { return v[idx(x, y, z)]; }
  double at(int x, int y, int z) const { return v[idx(x, y, z)]; }

  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Computational volume description. Sound speed is either a scalar c0 or a
// per-voxel Field (data generation only; reconstruction assumes scalar).
struct Grid {
  std::array<int, 3> dims{0, 0, 0};        // (Nx, Ny, Nz) voxels
  std::array<double, 3> spacing{0, 0, 0};  // (dx, dy, dz) meters
  double dt = 0;                           // time step, seconds
  int nt = 0;                              // number of time samples
  std::variant<double, Field> sound_speed = 1500.0;  // m/s
  int pml_thickness = 10;                  // absorbing-layer width, voxels
  double pml_alpha = 2.0;                  // absorption strength

  bool homogeneous() const { return std::holds_alternative<double>(sound_speed); }

  double c_scalar() const { return std::get<double>(sound_speed); }

  double c_at(size_t i) const {
    return homogeneous() ? std::get<double>(sound_speed) : std::get<Field>(sound_speed).v[i];
  }

  double max_c() const {
    if (homogeneous()) return std::get<double>(sound_speed);
    double m = 0;
    for (double c : std::get<Field>(sound_speed).v) m = std::max(m, c);
    return m;
  }

  double min_c() const {
    if (homogeneous()) return std::get<double>(sound_speed);
    double m = std::numeric_limits<double>::max();
    for (double c : std::get<Field>(sound_speed).v) m = std::min(m, c);
    return m;
  }

  size_t n_voxels() const {
    return static_cast<size_t>(dims[0]) * dims[1] * dims[2];
  }

  void validate() const {
    for (int d : dims) require(d >= 8, "grid dims must be >= 8");
    for (double s : spacing) require(s > 0, "grid spacing must be positive");
    require(dt > 0, "dt must be positive");
    require(nt >= 1, "nt must be >= 1");
    require(pml_thickness >= 0, "pml_thickness must be >= 0");
    if (!homogeneous()) {
      const Field& c = std::get<Field>(sound_speed);
      require(c.dims == dims, "sound speed field dims mismatch");
    }
    require(min_c() > 0, "sound speed must be strictly positive");
    const double dmin = std::min({spacing[0], spacing[1], spacing[2]});
    require(dt <= kCflLimit * dmin / max_c() * (1 + 1e-12),
            "dt violates stability bound dt <= " + std::to_string(kCflLimit) +
                " * min(spacing) / max(c)");
  }
};

// Pressure-time record on the detection plane (the x = 0 voxel layer).
// Storage is trace-major: values[(z*Ny + y)*nt + t], i.e. time fastest.
struct PlaneSeries {
  std::array<int, 2> dims{0, 0};  // (Ny, Nz)
  int nt = 0;
  std::vector<double> v;

  PlaneSeries() = default;
  PlaneSeries(int ny, int nz, int nt_)
      : dims{ny, nz}, nt(nt_), v(static_cast<size_t>(ny) * nz * nt_, 0.0) {}

  size_t n_traces() const { return static_cast<size_t>(dims[0]) * dims[1]; }
  size_t size() const { return v.size(); }
  double* trace(size_t plane_idx) { return v.data() + plane_idx * nt; }
  const double* trace(size_t plane_idx) const { return v.data() + plane_idx * nt; }

  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// --- deterministic RNG ------------------------------------------------------
//
// All stochastic operations take explicit seeds and must reproduce bit-equal
// results across runs, so we avoid the implementation-defined std::
// distributions and keep the generator + transforms in one place.

class Rng {
 public:
  explicit Rng(uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ULL) {
    // splitmix64 warmup decorrelates small seeds
    for (int i = 0; i < 4; i++) next();
  }

  uint64_t next() {
    uint64_t z = (s_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t below(uint64_t n) {
    // rejection sampling keeps the draw exactly uniform
    uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next();
    } while (x >= lim);
    return x % n;
  }

  // standard normal via Box-Muller (cached spare)
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[below(i)]);
  }

 private:
  uint64_t s_;
  bool has_spare_ = false;
  double spare_ = 0;
};

// Global thread budget for internal parallelism (FFT plans, pointwise loops).
// Results are bit-stable for a fixed thread count.
void set_threads(int n);
int threads();

}  // namespace cspat
