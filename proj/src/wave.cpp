#include "cspat/wave.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <vector>

namespace cspat::wave {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void init_fftw_threads_once() {
#ifndef CSPAT_NO_FFTW_THREADS
  static std::once_flag flag;
  std::call_once(flag, [] {
    fftw_init_threads();
    fftwf_init_threads();
  });
#endif
}

void plan_with_threads_f64() {
#ifndef CSPAT_NO_FFTW_THREADS
  fftw_plan_with_nthreads(threads());
#endif
}

void plan_with_threads_f32() {
#ifndef CSPAT_NO_FFTW_THREADS
  fftwf_plan_with_nthreads(threads());
#endif
}

template <class T>
struct Fftw;

template <>
struct Fftw<double> {
  using Real = double;
  using Complex = fftw_complex;
  using Plan = fftw_plan;
  static Real* alloc_real(size_t n) { return fftw_alloc_real(n); }
  static Complex* alloc_complex(size_t n) { return fftw_alloc_complex(n); }
  static void free(void* p) { fftw_free(p); }
  static Plan plan_r2c(int nz, int ny, int nx, Real* in, Complex* out) {
    plan_with_threads_f64();
    return fftw_plan_dft_r2c_3d(nz, ny, nx, in, out, FFTW_ESTIMATE);
  }
  static Plan plan_c2r(int nz, int ny, int nx, Complex* in, Real* out) {
    plan_with_threads_f64();
    return fftw_plan_dft_c2r_3d(nz, ny, nx, in, out, FFTW_ESTIMATE);
  }
  static void r2c(Plan p, Real* in, Complex* out) { fftw_execute_dft_r2c(p, in, out); }
  static void c2r(Plan p, Complex* in, Real* out) { fftw_execute_dft_c2r(p, in, out); }
  static void destroy(Plan p) { fftw_destroy_plan(p); }
};

template <>
struct Fftw<float> {
  using Real = float;
  using Complex = fftwf_complex;
  using Plan = fftwf_plan;
  static Real* alloc_real(size_t n) { return fftwf_alloc_real(n); }
  static Complex* alloc_complex(size_t n) { return fftwf_alloc_complex(n); }
  static void free(void* p) { fftwf_free(p); }
  static Plan plan_r2c(int nz, int ny, int nx, Real* in, Complex* out) {
    plan_with_threads_f32();
    return fftwf_plan_dft_r2c_3d(nz, ny, nx, in, out, FFTW_ESTIMATE);
  }
  static Plan plan_c2r(int nz, int ny, int nx, Complex* in, Real* out) {
    plan_with_threads_f32();
    return fftwf_plan_dft_c2r_3d(nz, ny, nx, in, out, FFTW_ESTIMATE);
  }
  static void r2c(Plan p, Real* in, Complex* out) { fftwf_execute_dft_r2c(p, in, out); }
  static void c2r(Plan p, Complex* in, Real* out) { fftwf_execute_dft_c2r(p, in, out); }
  static void destroy(Plan p) { fftwf_destroy_plan(p); }
};

// First-order coupled pressure/velocity scheme with the k-space correction
// factor sinc(c_ref |k| dt / 2) and split-field absorption. One step is
//   u_a   <- pml_a (pml_a u_a - dt D_a p),        p = c^2 (rho_x+rho_y+rho_z)
//   rho_a <- pml_a (pml_a rho_a - dt D_a u_a)
// where D_a is the spectral derivative along axis a (Nyquist zeroed, so the
// real operator satisfies D^T = -D exactly). The adjoint below is the literal
// transpose of each sub-operation executed in reverse order.
template <class T>
class Engine {
  using F = Fftw<T>;
  using Complex = typename F::Complex;

 public:
  explicit Engine(const Grid& grid) : grid_(grid) {
    grid_.validate();
    pml_ = grid_.pml_thickness;
    nx_ = grid_.dims[0] + 2 * pml_;
    ny_ = grid_.dims[1] + 2 * pml_;
    nz_ = grid_.dims[2] + 2 * pml_;
    n_ = static_cast<size_t>(nx_) * ny_ * nz_;
    nxh_ = nx_ / 2 + 1;
    nc_ = static_cast<size_t>(nxh_) * ny_ * nz_;

    for (auto** b : {&u_[0], &u_[1], &u_[2], &rho_[0], &rho_[1], &rho_[2], &p_, &d_, &t_})
      *b = F::alloc_real(n_);
    spec_ = F::alloc_complex(nc_);
    spec2_ = F::alloc_complex(nc_);

    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      init_fftw_threads_once();
      plan_r2c_ = F::plan_r2c(nz_, ny_, nx_, p_, spec_);
      plan_c2r_ = F::plan_c2r(nz_, ny_, nx_, spec_, p_);
    }

    build_material();
    build_spectral();
    build_pml();
  }

  ~Engine() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    F::destroy(plan_r2c_);
    F::destroy(plan_c2r_);
    for (auto* b : {u_[0], u_[1], u_[2], rho_[0], rho_[1], rho_[2], p_, d_, t_}) F::free(b);
    F::free(spec_);
    F::free(spec2_);
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const Grid& grid() const { return grid_; }

  PlaneSeries forward(const Field& p0) {
    require(p0.dims == grid_.dims, "forward: field dims do not match grid");
    require(p0.finite(), "forward: non-finite input");
    const int nt = grid_.nt;
    PlaneSeries out(grid_.dims[1], grid_.dims[2], nt);

    zero_state();
    inject(p0);
    record(out, 0);
    for (int n = 1; n < nt; n++) {
      step();
      record(out, n);
    }
    return out;
  }

  Field adjoint(const PlaneSeries& series) {
    require(series.dims[0] == grid_.dims[1] && series.dims[1] == grid_.dims[2] &&
                series.nt == grid_.nt,
            "adjoint: series dims do not match grid");
    require(series.finite(), "adjoint: non-finite input");
    const int nt = grid_.nt;
    const T dt = static_cast<T>(grid_.dt);

    zero_state();  // u_, rho_ reused as the transposed-recursion state
    for (int n = nt - 1; n >= 0; n--) {
      if (n < nt - 1) {
        // transpose of the density update: wu_a += dt D_a(pml_a wr_a),
        // wr_a <- pml_a^2 wr_a
        for (int a = 0; a < 3; a++) {
          mul_pml(rho_[a], t_, a);
          derivative(t_, a, d_);
          axpy(u_[a], d_, dt);
          mul_pml(t_, rho_[a], a);
        }
        // transpose of the velocity update: wr_a += dt c^2 sum_b D_b(pml_b wu_b),
        // wu_a <- pml_a^2 wu_a
        std::memset(spec2_, 0, sizeof(Complex) * nc_);
        for (int a = 0; a < 3; a++) {
          mul_pml(u_[a], t_, a);
          F::r2c(plan_r2c_, t_, spec_);
          accumulate_derivative_spec(a);
        }
        F::c2r(plan_c2r_, spec2_, d_);
        for (int a = 0; a < 3; a++) {
          add_scaled_c2(rho_[a], d_, dt);
          mul_pml_sq_inplace(u_[a], a);
        }
      }
      scatter_plane(series, n);
    }

    Field out(grid_.dims);
    crop_weighted(out);
    return out;
  }

  Field time_reverse(const PlaneSeries& series) {
    require(series.dims[0] == grid_.dims[1] && series.dims[1] == grid_.dims[2] &&
                series.nt == grid_.nt,
            "time_reverse: series dims do not match grid");
    require(series.finite(), "time_reverse: non-finite input");
    const int nt = grid_.nt;

    zero_state();
    for (int n = 0; n < nt; n++) {
      enforce_plane(series, nt - 1 - n);
      if (n < nt - 1) step();
    }
    pressure(p_);
    Field out(grid_.dims);
    crop_pressure(out);
    return out;
  }

 private:
  Grid grid_;
  int pml_ = 0, nx_ = 0, ny_ = 0, nz_ = 0, nxh_ = 0;
  size_t n_ = 0, nc_ = 0;

  T* u_[3] = {};
  T* rho_[3] = {};
  T* p_ = nullptr;
  T* d_ = nullptr;
  T* t_ = nullptr;
  Complex* spec_ = nullptr;
  Complex* spec2_ = nullptr;
  typename F::Plan plan_r2c_{}, plan_c2r_{};

  std::vector<T> c2_, inv3c2_;
  std::vector<T> pml_fac_[3];          // per-axis absorption factors exp(-alpha dt/2)
  std::vector<T> kd_[3];               // derivative wavenumbers, Nyquist zeroed
  std::vector<T> kappa_;               // sinc correction, 1/N normalization folded in

  size_t cidx(int x, int y, int z) const {
    return static_cast<size_t>(x) + static_cast<size_t>(nx_) * (y + static_cast<size_t>(ny_) * z);
  }

  void build_material() {
    c2_.resize(n_);
    inv3c2_.resize(n_);
    const int ux = grid_.dims[0], uy = grid_.dims[1], uz = grid_.dims[2];
    for (int z = 0; z < nz_; z++) {
      const int zu = std::clamp(z - pml_, 0, uz - 1);
      for (int y = 0; y < ny_; y++) {
        const int yu = std::clamp(y - pml_, 0, uy - 1);
        for (int x = 0; x < nx_; x++) {
          const int xu = std::clamp(x - pml_, 0, ux - 1);
          const double c = grid_.c_at(static_cast<size_t>(xu) +
                                      static_cast<size_t>(ux) * (yu + static_cast<size_t>(uy) * zu));
          c2_[cidx(x, y, z)] = static_cast<T>(c * c);
          inv3c2_[cidx(x, y, z)] = static_cast<T>(1.0 / (3.0 * c * c));
        }
      }
    }
  }

  void build_spectral() {
    const double c_ref = grid_.max_c();
    const int dims[3] = {nx_, ny_, nz_};
    std::array<std::vector<double>, 3> kfull;
    for (int a = 0; a < 3; a++) {
      const int na = dims[a];
      kfull[a].resize(na);
      kd_[a].resize(na);
      for (int i = 0; i < na; i++) {
        const int f = i <= na / 2 ? i : i - na;
        const double k = 2.0 * M_PI * f / (na * grid_.spacing[a]);
        kfull[a][i] = k;
        kd_[a][i] = static_cast<T>(k);
      }
      if (na % 2 == 0) {
        kfull[a][na / 2] = M_PI / grid_.spacing[a];  // magnitude for the sinc argument
        kd_[a][na / 2] = 0;                          // derivative must vanish at Nyquist
      }
    }
    kappa_.resize(nc_);
    const double norm = 1.0 / static_cast<double>(n_);
    for (int z = 0; z < nz_; z++) {
      for (int y = 0; y < ny_; y++) {
        for (int kx = 0; kx < nxh_; kx++) {
          const double kk = std::sqrt(kfull[0][kx] * kfull[0][kx] +
                                      kfull[1][y] * kfull[1][y] + kfull[2][z] * kfull[2][z]);
          const double arg = c_ref * kk * grid_.dt / 2.0;
          const double sinc = arg == 0.0 ? 1.0 : std::sin(arg) / arg;
          kappa_[static_cast<size_t>(kx) + static_cast<size_t>(nxh_) * (y + static_cast<size_t>(ny_) * z)] =
              static_cast<T>(sinc * norm);
        }
      }
    }
  }

  void build_pml() {
    const double c_ref = grid_.max_c();
    const int dims[3] = {nx_, ny_, nz_};
    for (int a = 0; a < 3; a++) {
      const int na = dims[a];
      pml_fac_[a].assign(na, static_cast<T>(1));
      if (pml_ == 0) continue;
      for (int i = 0; i < na; i++) {
        double depth = 0;
        if (i < pml_)
          depth = static_cast<double>(pml_ - i) / pml_;
        else if (i >= na - pml_)
          depth = static_cast<double>(i - (na - pml_ - 1)) / pml_;
        if (depth > 0) {
          const double alpha = grid_.pml_alpha * (c_ref / grid_.spacing[a]) * std::pow(depth, 4);
          pml_fac_[a][i] = static_cast<T>(std::exp(-alpha * grid_.dt / 2.0));
        }
      }
    }
  }

  void zero_state() {
    for (int a = 0; a < 3; a++) {
      std::memset(u_[a], 0, sizeof(T) * n_);
      std::memset(rho_[a], 0, sizeof(T) * n_);
    }
  }

  void inject(const Field& p0) {
    const int ux = grid_.dims[0], uy = grid_.dims[1], uz = grid_.dims[2];
    for (int z = 0; z < uz; z++)
      for (int y = 0; y < uy; y++) {
        const size_t cbase = cidx(pml_, y + pml_, z + pml_);
        const size_t ubase = p0.idx(0, y, z);
        for (int x = 0; x < ux; x++) {
          const T val = static_cast<T>(p0.v[ubase + x]) * inv3c2_[cbase + x];
          rho_[0][cbase + x] = val;
          rho_[1][cbase + x] = val;
          rho_[2][cbase + x] = val;
        }
      }
  }

  void pressure(T* out) {
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz_; z++) {
      const size_t base = static_cast<size_t>(z) * nx_ * ny_;
      for (size_t i = base; i < base + static_cast<size_t>(nx_) * ny_; i++)
        out[i] = c2_[i] * (rho_[0][i] + rho_[1][i] + rho_[2][i]);
    }
  }

  // out = Re IFFT(i k_a kappa FFT(in)); spec_ and spec2_ are clobbered
  void derivative(T* in, int axis, T* out) {
    F::r2c(plan_r2c_, in, spec_);
    multiply_ik_kappa(spec_, axis, spec2_);
    F::c2r(plan_c2r_, spec2_, out);
  }

  void multiply_ik_kappa(const Complex* in, int axis, Complex* out) {
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz_; z++) {
      for (int y = 0; y < ny_; y++) {
        size_t i = static_cast<size_t>(nxh_) * (y + static_cast<size_t>(ny_) * z);
        for (int kx = 0; kx < nxh_; kx++, i++) {
          const T k = axis == 0 ? kd_[0][kx] : (axis == 1 ? kd_[1][y] : kd_[2][z]);
          const T m = k * kappa_[i];
          const T re = in[i][0], im = in[i][1];
          out[i][0] = -m * im;
          out[i][1] = m * re;
        }
      }
    }
  }

  // spec2_ += i k_a kappa spec_
  void accumulate_derivative_spec(int axis) {
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz_; z++) {
      for (int y = 0; y < ny_; y++) {
        size_t i = static_cast<size_t>(nxh_) * (y + static_cast<size_t>(ny_) * z);
        for (int kx = 0; kx < nxh_; kx++, i++) {
          const T k = axis == 0 ? kd_[0][kx] : (axis == 1 ? kd_[1][y] : kd_[2][z]);
          const T m = k * kappa_[i];
          spec2_[i][0] -= m * spec_[i][1];
          spec2_[i][1] += m * spec_[i][0];
        }
      }
    }
  }

  // field update helpers; the absorption factor broadcasts along one axis

  void update_damped(T* field, const T* grad, int axis, T dt) {
    const T* fac = pml_fac_[axis].data();
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz_; z++) {
      const T fz = fac[z];
      for (int y = 0; y < ny_; y++) {
        const T fy = fac[y];
        size_t i = cidx(0, y, z);
        if (axis == 0) {
          for (int x = 0; x < nx_; x++, i++) {
            const T f = fac[x];
            field[i] = f * (f * field[i] - dt * grad[i]);
          }
        } else {
          const T f = axis == 1 ? fy : fz;
          for (int x = 0; x < nx_; x++, i++) field[i] = f * (f * field[i] - dt * grad[i]);
        }
      }
    }
  }

  void mul_pml(const T* in, T* out, int axis) {
    const T* fac = pml_fac_[axis].data();
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz_; z++) {
      for (int y = 0; y < ny_; y++) {
        size_t i = cidx(0, y, z);
        if (axis == 0) {
          for (int x = 0; x < nx_; x++, i++) out[i] = fac[x] * in[i];
        } else {
          const T f = axis == 1 ? fac[y] : fac[z];
          for (int x = 0; x < nx_; x++, i++) out[i] = f * in[i];
        }
      }
    }
  }

  void mul_pml_sq_inplace(T* field, int axis) {
    const T* fac = pml_fac_[axis].data();
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz_; z++) {
      for (int y = 0; y < ny_; y++) {
        size_t i = cidx(0, y, z);
        if (axis == 0) {
          for (int x = 0; x < nx_; x++, i++) field[i] *= fac[x] * fac[x];
        } else {
          const T f = axis == 1 ? fac[y] : fac[z];
          const T f2 = f * f;
          for (int x = 0; x < nx_; x++, i++) field[i] *= f2;
        }
      }
    }
  }

  void axpy(T* acc, const T* x, T a) {
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz_; z++) {
      const size_t base = static_cast<size_t>(z) * nx_ * ny_;
      for (size_t i = base; i < base + static_cast<size_t>(nx_) * ny_; i++) acc[i] += a * x[i];
    }
  }

  void add_scaled_c2(T* acc, const T* x, T a) {
#pragma omp parallel for if (threads() > 1)
    for (int z = 0; z < nz_; z++) {
      const size_t base = static_cast<size_t>(z) * nx_ * ny_;
      for (size_t i = base; i < base + static_cast<size_t>(nx_) * ny_; i++)
        acc[i] += a * c2_[i] * x[i];
    }
  }

  void step() {
    const T dt = static_cast<T>(grid_.dt);
    pressure(p_);
    F::r2c(plan_r2c_, p_, spec_);
    for (int a = 0; a < 3; a++) {
      multiply_ik_kappa(spec_, a, spec2_);
      F::c2r(plan_c2r_, spec2_, d_);
      update_damped(u_[a], d_, a, dt);
    }
    for (int a = 0; a < 3; a++) {
      derivative(u_[a], a, d_);
      update_damped(rho_[a], d_, a, dt);
    }
  }

  void record(PlaneSeries& out, int t) {
    const int uy = grid_.dims[1], uz = grid_.dims[2];
    const int nt = grid_.nt;
    for (int z = 0; z < uz; z++)
      for (int y = 0; y < uy; y++) {
        const size_t ci = cidx(pml_, y + pml_, z + pml_);
        out.v[(static_cast<size_t>(z) * uy + y) * nt + t] =
            static_cast<double>(c2_[ci] * (rho_[0][ci] + rho_[1][ci] + rho_[2][ci]));
      }
  }

  void scatter_plane(const PlaneSeries& series, int t) {
    const int uy = grid_.dims[1], uz = grid_.dims[2];
    const int nt = grid_.nt;
    for (int z = 0; z < uz; z++)
      for (int y = 0; y < uy; y++) {
        const size_t ci = cidx(pml_, y + pml_, z + pml_);
        const T val = c2_[ci] * static_cast<T>(series.v[(static_cast<size_t>(z) * uy + y) * nt + t]);
        rho_[0][ci] += val;
        rho_[1][ci] += val;
        rho_[2][ci] += val;
      }
  }

  void enforce_plane(const PlaneSeries& series, int t) {
    const int uy = grid_.dims[1], uz = grid_.dims[2];
    const int nt = grid_.nt;
    for (int z = 0; z < uz; z++)
      for (int y = 0; y < uy; y++) {
        const size_t ci = cidx(pml_, y + pml_, z + pml_);
        const T val = static_cast<T>(series.v[(static_cast<size_t>(z) * uy + y) * nt + t]) * inv3c2_[ci];
        rho_[0][ci] = val;
        rho_[1][ci] = val;
        rho_[2][ci] = val;
      }
  }

  void crop_weighted(Field& out) {
    const int ux = grid_.dims[0], uy = grid_.dims[1], uz = grid_.dims[2];
    for (int z = 0; z < uz; z++)
      for (int y = 0; y < uy; y++)
        for (int x = 0; x < ux; x++) {
          const size_t ci = cidx(x + pml_, y + pml_, z + pml_);
          out.v[out.idx(x, y, z)] = static_cast<double>(
              (rho_[0][ci] + rho_[1][ci] + rho_[2][ci]) * inv3c2_[ci]);
        }
  }

  void crop_pressure(Field& out) {
    const int ux = grid_.dims[0], uy = grid_.dims[1], uz = grid_.dims[2];
    for (int z = 0; z < uz; z++)
      for (int y = 0; y < uy; y++)
        for (int x = 0; x < ux; x++)
          out.v[out.idx(x, y, z)] =
              static_cast<double>(p_[cidx(x + pml_, y + pml_, z + pml_)]);
  }
};

}  // namespace

NyquistLimits nyquist_limits(double c, double f_max) {
  require(c > 0, "nyquist_limits: sound speed must be positive");
  require(f_max > 0, "nyquist_limits: frequency must be positive");
  return {c / (2.0 * f_max), 1.0 / (2.0 * f_max)};
}

struct WaveEngine::Impl {
  Dtype dtype;
  std::unique_ptr<Engine<double>> e64;
  std::unique_ptr<Engine<float>> e32;
};

WaveEngine::WaveEngine(const Grid& grid, Dtype dtype) : impl_(new Impl) {
  impl_->dtype = dtype;
  if (dtype == Dtype::f64)
    impl_->e64 = std::make_unique<Engine<double>>(grid);
  else
    impl_->e32 = std::make_unique<Engine<float>>(grid);
}

WaveEngine::~WaveEngine() = default;
WaveEngine::WaveEngine(WaveEngine&&) noexcept = default;
WaveEngine& WaveEngine::operator=(WaveEngine&&) noexcept = default;

PlaneSeries WaveEngine::forward(const Field& p0) {
  return impl_->e64 ? impl_->e64->forward(p0) : impl_->e32->forward(p0);
}

Field WaveEngine::adjoint(const PlaneSeries& series) {
  return impl_->e64 ? impl_->e64->adjoint(series) : impl_->e32->adjoint(series);
}

Field WaveEngine::time_reverse(const PlaneSeries& series) {
  return impl_->e64 ? impl_->e64->time_reverse(series) : impl_->e32->time_reverse(series);
}

const Grid& WaveEngine::grid() const {
  return impl_->e64 ? impl_->e64->grid() : impl_->e32->grid();
}

Dtype WaveEngine::dtype() const { return impl_->dtype; }

PlaneSeries forward(const Field& p0, const Grid& grid, Dtype dtype) {
  return WaveEngine(grid, dtype).forward(p0);
}

Field adjoint(const PlaneSeries& series, const Grid& grid, Dtype dtype) {
  return WaveEngine(grid, dtype).adjoint(series);
}

Field time_reverse(const PlaneSeries& series, const Grid& grid, Dtype dtype) {
  return WaveEngine(grid, dtype).time_reverse(series);
}

}  // namespace cspat::wave
