#pragma once

#include <memory>

#include "cspat/core.hpp"

namespace cspat::wave {

// Spatial and temporal sampling limits for a signal band-limited to f_max.
struct NyquistLimits {
  double delta_r;  // meters
  double delta_t;  // seconds
};
NyquistLimits nyquist_limits(double c, double f_max);

// Discrete acoustic propagation on a k-space pseudospectral grid.
//
// The computational grid extends the user grid by pml_thickness voxels on
// every face; the detection plane is the user x = 0 voxel layer, which sits
// at the inner edge of the absorbing collar. forward() maps an initial
// pressure to the plane record sampled at t = 0, dt, ..., (nt-1) dt;
// adjoint() is the exact algebraic transpose of that discrete pipeline;
// time_reverse() runs the solver backwards with the reversed record enforced
// as Dirichlet values on the plane voxels.
//
// The engine owns FFT plans and state buffers: reuse one instance for
// repeated applications on the same grid. Methods are not thread-safe on a
// shared instance; distinct instances may run concurrently.
class WaveEngine {
 public:
  explicit WaveEngine(const Grid& grid, Dtype dtype = Dtype::f64);
  ~WaveEngine();
  WaveEngine(WaveEngine&& other) noexcept;
  WaveEngine& operator=(WaveEngine&& other) noexcept;

  PlaneSeries forward(const Field& p0);
  Field adjoint(const PlaneSeries& series);
  Field time_reverse(const PlaneSeries& series);

  const Grid& grid() const;
  Dtype dtype() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Convenience single-shot wrappers.
PlaneSeries forward(const Field& p0, const Grid& grid, Dtype dtype = Dtype::f64);
Field adjoint(const PlaneSeries& series, const Grid& grid, Dtype dtype = Dtype::f64);
Field time_reverse(const PlaneSeries& series, const Grid& grid, Dtype dtype = Dtype::f64);

}  // namespace cspat::wave
