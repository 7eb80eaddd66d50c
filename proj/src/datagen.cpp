#include "cspat/datagen.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>

namespace cspat::datagen {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// double-precision r2c helper for the few volume-sized spectral filters here
struct SpectralFilter3d {
  std::array<int, 3> dims;
  size_t n, nc;
  double* real;
  fftw_complex* spec;
  fftw_plan fwd, bwd;

  explicit SpectralFilter3d(const std::array<int, 3>& d) : dims(d) {
    n = static_cast<size_t>(d[0]) * d[1] * d[2];
    nc = static_cast<size_t>(d[0] / 2 + 1) * d[1] * d[2];
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(nc);
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_3d(d[2], d[1], d[0], real, spec, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_3d(d[2], d[1], d[0], spec, real, FFTW_ESTIMATE);
  }

  ~SpectralFilter3d() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(real);
    fftw_free(spec);
  }

  // apply a real radial transfer function of the wavevector (rad/m)
  template <class WindowFn>
  void apply(std::vector<double>& v, const std::array<double, 3>& spacing, WindowFn window) {
    std::copy(v.begin(), v.end(), real);
    fftw_execute(fwd);
    const int nx = dims[0], ny = dims[1], nz = dims[2], nxh = nx / 2 + 1;
    const double norm = 1.0 / static_cast<double>(n);
    auto kval = [](int i, int na, double d) {
      const int f = i <= na / 2 ? i : i - na;
      return 2.0 * M_PI * f / (na * d);
    };
    size_t i = 0;
    for (int z = 0; z < nz; z++) {
      const double kz = kval(z, nz, spacing[2]);
      for (int y = 0; y < ny; y++) {
        const double ky = kval(y, ny, spacing[1]);
        for (int kx = 0; kx < nxh; kx++, i++) {
          const double kxx = kval(kx, nx, spacing[0]);
          const double w = window(std::sqrt(kxx * kxx + ky * ky + kz * kz)) * norm;
          spec[i][0] *= w;
          spec[i][1] *= w;
        }
      }
    }
    fftw_execute(bwd);
    std::copy(real, real + n, v.begin());
  }
};

struct Vec3 {
  double x, y, z;
};

Vec3 normalize(Vec3 v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  if (n == 0) return {1, 0, 0};
  return {v.x / n, v.y / n, v.z / n};
}

Vec3 random_unit(Rng& rng) {
  // rejection sampling inside the unit ball keeps the direction uniform
  for (;;) {
    Vec3 v{2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1};
    const double n2 = v.x * v.x + v.y * v.y + v.z * v.z;
    if (n2 > 1e-6 && n2 <= 1.0) return normalize(v);
  }
}

void stamp_ball(Field& f, const Vec3& center, double radius, double value) {
  if (radius <= 0) return;
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x - radius)));
  const int x1 = std::min(f.dims[0] - 1, static_cast<int>(std::ceil(center.x + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y - radius)));
  const int y1 = std::min(f.dims[1] - 1, static_cast<int>(std::ceil(center.y + radius)));
  const int z0 = std::max(0, static_cast<int>(std::floor(center.z - radius)));
  const int z1 = std::min(f.dims[2] - 1, static_cast<int>(std::ceil(center.z + radius)));
  const double r2 = radius * radius;
  for (int z = z0; z <= z1; z++)
    for (int y = y0; y <= y1; y++)
      for (int x = x0; x <= x1; x++) {
        const double dx = x - center.x, dy = y - center.y, dz = z - center.z;
        if (dx * dx + dy * dy + dz * dz <= r2) {
          double& v = f.at(x, y, z);
          v = std::max(v, value);
        }
      }
}

Field make_balls(const Grid& grid, uint64_t seed, const nlohmann::json& params) {
  Field f(grid.dims);
  std::vector<double> radii;
  if (params.contains("radii")) radii = params["radii"].get<std::vector<double>>();
  const double value = params.value("value", 1.0);
  require(value >= 0, "balls: value must be non-negative");
  Rng rng(seed);
  for (double r : radii) {
    require(r >= 0, "balls: radii must be non-negative");
    const double margin = r + 2;
    Vec3 c{margin + rng.uniform() * (grid.dims[0] - 2 * margin),
           margin + rng.uniform() * (grid.dims[1] - 2 * margin),
           margin + rng.uniform() * (grid.dims[2] - 2 * margin)};
    stamp_ball(f, c, r, value);
  }
  return f;
}

Field make_tubes(const Grid& grid, uint64_t seed, const nlohmann::json& params) {
  Field f(grid.dims);
  const int count = params.value("count", 3);
  const double radius = params.value("radius", 2.0);
  const double value = params.value("value", 1.0);
  require(count >= 0 && radius >= 0 && value >= 0, "tubes: invalid params");
  Rng rng(seed);
  for (int t = 0; t < count; t++) {
    Vec3 a{radius + rng.uniform() * (grid.dims[0] - 2 * radius),
           radius + rng.uniform() * (grid.dims[1] - 2 * radius),
           radius + rng.uniform() * (grid.dims[2] - 2 * radius)};
    Vec3 b{radius + rng.uniform() * (grid.dims[0] - 2 * radius),
           radius + rng.uniform() * (grid.dims[1] - 2 * radius),
           radius + rng.uniform() * (grid.dims[2] - 2 * radius)};
    const double len = std::sqrt((b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y) +
                                 (b.z - a.z) * (b.z - a.z));
    const int steps = std::max(2, static_cast<int>(len / std::max(0.5, radius * 0.5)));
    for (int s = 0; s <= steps; s++) {
      const double u = static_cast<double>(s) / steps;
      stamp_ball(f, {a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), a.z + u * (b.z - a.z)},
                 radius, value);
    }
  }
  return f;
}

struct VesselParams {
  double radius0 = 2.5;
  double radius_decay = 0.78;
  int levels = 4;
  double value = 1.0;
  double branch_angle = 0.6;  // radians
  double jitter = 0.25;
  double depth_lo = 0.1;      // fraction of N_x
  double depth_hi = 0.7;
};

VesselParams vessel_params(const nlohmann::json& params) {
  VesselParams vp;
  vp.radius0 = params.value("radius", vp.radius0);
  vp.radius_decay = params.value("radius_decay", vp.radius_decay);
  vp.levels = params.value("levels", vp.levels);
  vp.value = params.value("value", vp.value);
  vp.jitter = params.value("jitter", vp.jitter);
  if (params.contains("depth_range")) {
    vp.depth_lo = params["depth_range"][0].get<double>();
    vp.depth_hi = params["depth_range"][1].get<double>();
  }
  require(vp.radius0 > 0 && vp.radius_decay > 0 && vp.radius_decay < 1 && vp.levels >= 1 &&
              vp.value >= 0 && vp.depth_lo >= 0 && vp.depth_hi <= 1 && vp.depth_lo < vp.depth_hi,
          "vessel_tree: invalid params");
  return vp;
}

void grow_vessels(Field& f, uint64_t seed, const VesselParams& vp) {
  Rng rng(seed);
  const double x_lo = vp.depth_lo * f.dims[0];
  const double x_hi = vp.depth_hi * f.dims[0];

  struct Branch {
    Vec3 pos, dir;
    double radius;
    int gen;
  };
  std::vector<Branch> stack;
  Vec3 root{0.5 * (x_lo + x_hi), 0.30 * f.dims[1], 0.5 * f.dims[2]};
  stack.push_back({root, normalize({0.1, 1.0, 0.2}), vp.radius0, 0});

  while (!stack.empty()) {
    Branch b = stack.back();
    stack.pop_back();
    const int steps = 10 + static_cast<int>(rng.below(12));
    const double step_len = std::max(1.0, b.radius * 0.9);
    for (int s = 0; s < steps; s++) {
      stamp_ball(f, b.pos, b.radius, vp.value);
      Vec3 j = random_unit(rng);
      b.dir = normalize({b.dir.x + vp.jitter * j.x, b.dir.y + vp.jitter * j.y,
                         b.dir.z + vp.jitter * j.z});
      b.pos = {b.pos.x + step_len * b.dir.x, b.pos.y + step_len * b.dir.y,
               b.pos.z + step_len * b.dir.z};
      // confine to the depth band and lateral bounds by reflecting
      if (b.pos.x < x_lo || b.pos.x > x_hi) {
        b.dir.x = -b.dir.x;
        b.pos.x = std::clamp(b.pos.x, x_lo, x_hi);
      }
      if (b.pos.y < 2 || b.pos.y > f.dims[1] - 3) {
        b.dir.y = -b.dir.y;
        b.pos.y = std::clamp(b.pos.y, 2.0, f.dims[1] - 3.0);
      }
      if (b.pos.z < 2 || b.pos.z > f.dims[2] - 3) {
        b.dir.z = -b.dir.z;
        b.pos.z = std::clamp(b.pos.z, 2.0, f.dims[2] - 3.0);
      }
    }
    if (b.gen + 1 < vp.levels) {
      const double child_r = b.radius * vp.radius_decay;
      if (child_r >= 0.7) {
        for (int c = 0; c < 2; c++) {
          Vec3 axis = random_unit(rng);
          const double a = (c == 0 ? 1.0 : -1.0) * vp.branch_angle;
          // rotate dir around a random axis (Rodrigues)
          const Vec3 d = b.dir;
          const double ca = std::cos(a), sa = std::sin(a);
          const double dot = axis.x * d.x + axis.y * d.y + axis.z * d.z;
          Vec3 nd{ca * d.x + sa * (axis.y * d.z - axis.z * d.y) + (1 - ca) * dot * axis.x,
                  ca * d.y + sa * (axis.z * d.x - axis.x * d.z) + (1 - ca) * dot * axis.y,
                  ca * d.z + sa * (axis.x * d.y - axis.y * d.x) + (1 - ca) * dot * axis.z};
          stack.push_back({b.pos, normalize(nd), child_r, b.gen + 1});
        }
      }
    }
  }
}

Field make_vessel_tree(const Grid& grid, uint64_t seed, const nlohmann::json& params) {
  Field f(grid.dims);
  grow_vessels(f, seed, vessel_params(params));
  return f;
}

// stochastic surface growth from a random seed voxel; 26-connected by
// construction, never overlapping occupied (vessel) voxels
void grow_tumor(Field& f, uint64_t seed, double value, size_t target_voxels,
                double accept_prob) {
  const int nx = f.dims[0], ny = f.dims[1], nz = f.dims[2];
  Rng rng(seed);
  std::vector<char> in_tumor(f.size(), 0);

  size_t start = 0;
  bool found = false;
  for (int tries = 0; tries < 4096 && !found; tries++) {
    const int x = nx / 4 + static_cast<int>(rng.below(std::max(1, nx / 2)));
    const int y = ny / 4 + static_cast<int>(rng.below(std::max(1, ny / 2)));
    const int z = nz / 4 + static_cast<int>(rng.below(std::max(1, nz / 2)));
    const size_t i = f.idx(x, y, z);
    if (f.v[i] == 0) {
      start = i;
      found = true;
    }
  }
  require(found, "tumor: could not place seed voxel outside the vasculature");

  in_tumor[start] = 1;
  size_t count = 1;
  std::vector<size_t> surface{start};
  std::vector<size_t> candidates;

  while (count < target_voxels && !surface.empty()) {
    candidates.clear();
    for (size_t si : surface) {
      const int x = static_cast<int>(si % nx);
      const int y = static_cast<int>((si / nx) % ny);
      const int z = static_cast<int>(si / (static_cast<size_t>(nx) * ny));
      for (int dz = -1; dz <= 1; dz++)
        for (int dy = -1; dy <= 1; dy++)
          for (int dx = -1; dx <= 1; dx++) {
            if (!dx && !dy && !dz) continue;
            const int X = x + dx, Y = y + dy, Z = z + dz;
            if (X < 1 || Y < 1 || Z < 1 || X >= nx - 1 || Y >= ny - 1 || Z >= nz - 1) continue;
            const size_t i = f.idx(X, Y, Z);
            if (!in_tumor[i] && f.v[i] == 0) candidates.push_back(i);
          }
    }
    if (candidates.empty()) break;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::vector<size_t> added;
    for (size_t c : candidates) {
      if (count >= target_voxels) break;
      if (rng.uniform() < accept_prob) {
        in_tumor[c] = 1;
        added.push_back(c);
        count++;
      }
    }
    if (added.empty()) continue;  // surface unchanged, retry with fresh draws
    surface.swap(added);
  }
  for (size_t i = 0; i < f.size(); i++)
    if (in_tumor[i]) f.v[i] = value;
}

Field make_tumor(const Grid& grid, uint64_t seed, const nlohmann::json& params) {
  Field f(grid.dims);
  nlohmann::json vessel = params.value("vessel", nlohmann::json::object());
  grow_vessels(f, seed, vessel_params(vessel));
  const double tumor_value = params.value("tumor_value", 0.7);
  const double frac = params.value("target_fraction", 0.01);
  const double accept = params.value("growth_prob", 0.5);
  require(tumor_value >= 0 && frac > 0 && frac < 0.5 && accept > 0 && accept <= 1,
          "tumor: invalid params");
  grow_tumor(f, seed + 0x7461ULL, tumor_value,
             static_cast<size_t>(frac * static_cast<double>(f.size())), accept);
  return f;
}

}  // namespace

PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "balls") return PhantomKind::balls;
  if (s == "tubes") return PhantomKind::tubes;
  if (s == "vessel_tree") return PhantomKind::vessel_tree;
  if (s == "tumor") return PhantomKind::tumor;
  throw ValidationError("unknown phantom kind: " + s);
}

Field make_phantom(PhantomKind kind, const Grid& grid, uint64_t seed,
                   const nlohmann::json& params) {
  require(params.is_object(), "phantom params must be a JSON object");
  switch (kind) {
    case PhantomKind::balls:
      return make_balls(grid, seed, params);
    case PhantomKind::tubes:
      return make_tubes(grid, seed, params);
    case PhantomKind::vessel_tree:
      return make_vessel_tree(grid, seed, params);
    case PhantomKind::tumor:
      return make_tumor(grid, seed, params);
  }
  throw ValidationError("unknown phantom kind");
}

Field remap_contrast(const Field& p0) {
  double mx = 0;
  for (double v : p0.v) mx = std::max(mx, v);
  require(std::abs(mx - 1.0) <= 1e-9, "remap_contrast: field must be normalized to max 1");
  Field out = p0;
  for (double& v : out.v)
    if (v != 0.0) v = (2.0 * v + 1.0) / 3.0;
  return out;
}

Field downsample_average(const Field& field, int factor) {
  require(factor >= 1, "downsample_average: factor must be >= 1");
  for (int d : field.dims)
    require(d % factor == 0, "downsample_average: dims must be divisible by factor");
  Field out(field.dims[0] / factor, field.dims[1] / factor, field.dims[2] / factor);
  const double inv = 1.0 / (static_cast<double>(factor) * factor * factor);
  for (int z = 0; z < out.dims[2]; z++)
    for (int y = 0; y < out.dims[1]; y++)
      for (int x = 0; x < out.dims[0]; x++) {
        double s = 0;
        for (int dz = 0; dz < factor; dz++)
          for (int dy = 0; dy < factor; dy++)
            for (int dx = 0; dx < factor; dx++)
              s += field.at(x * factor + dx, y * factor + dy, z * factor + dz);
        out.at(x, y, z) = s * inv;
      }
  return out;
}

PresmoothResult presmooth(const Field& p0, const Grid& grid) {
  require(p0.dims == grid.dims, "presmooth: field dims do not match grid");
  const double dmax = std::max({grid.spacing[0], grid.spacing[1], grid.spacing[2]});
  const double k_star = M_PI / dmax;
  PresmoothResult res{p0, grid.max_c() / (2.0 * dmax)};
  SpectralFilter3d filter(p0.dims);
  filter.apply(res.field.v, grid.spacing, [k_star](double k) {
    const double q = k / k_star;
    if (q <= 0.9) return 1.0;
    if (q >= 1.0) return 0.0;
    const double c = std::cos(0.5 * M_PI * (q - 0.9) / 0.1);
    return c * c;
  });
  for (double& v : res.field.v) v = std::max(0.0, v);
  return res;
}

std::vector<double> lognormal_weights(size_t count, double sigma, uint64_t seed) {
  require(sigma >= 0, "lognormal_weights: sigma must be >= 0");
  std::vector<double> w(count);
  Rng rng(seed);
  for (double& x : w) x = std::exp(sigma * rng.normal());
  return w;
}

std::vector<double> sensitivity_map(std::array<int, 2> plane_dims, double sigma_s,
                                    uint64_t seed) {
  return lognormal_weights(static_cast<size_t>(plane_dims[0]) * plane_dims[1], sigma_s, seed);
}

void apply_sensitivity(PlaneSeries& series, const std::vector<double>& weights) {
  require(weights.size() == series.n_traces(), "apply_sensitivity: weight count mismatch");
  for (size_t p = 0; p < series.n_traces(); p++) {
    double* tr = series.trace(p);
    for (int t = 0; t < series.nt; t++) tr[t] *= weights[p];
  }
}

Field perturb_sound_speed(double c0, const Field& p0, double amplitude, uint64_t seed) {
  require(c0 > 0, "perturb_sound_speed: c0 must be positive");
  require(amplitude >= 0 && amplitude < 0.3, "perturb_sound_speed: amplitude out of range");
  Field out(p0.dims);
  if (amplitude == 0.0) {
    std::fill(out.v.begin(), out.v.end(), c0);
    return out;
  }

  // smooth Gaussian random field: white noise low-passed by a Gaussian
  // kernel of width 8 voxels
  std::vector<double> g(p0.size());
  Rng rng(seed);
  for (double& x : g) x = rng.normal();
  {
    SpectralFilter3d filter(p0.dims);
    const double width = 8.0;
    std::array<double, 3> unit_spacing{1.0, 1.0, 1.0};
    filter.apply(g, unit_spacing, [width](double k) {
      return std::exp(-0.5 * (k * width) * (k * width));
    });
  }
  double gmax = 0;
  for (double x : g) gmax = std::max(gmax, std::abs(x));
  require(gmax > 0, "perturb_sound_speed: degenerate random field");

  double pmax = 0;
  for (double x : p0.v) pmax = std::max(pmax, std::abs(x));
  const double pscale = pmax > 0 ? 1.0 / pmax : 0.0;

  std::vector<double>& t = out.v;
  double mean = 0;
  for (size_t i = 0; i < t.size(); i++) {
    t[i] = g[i] / gmax + p0.v[i] * pscale;
    mean += t[i];
  }
  mean /= static_cast<double>(t.size());
  double tmax = 0;
  for (double& x : t) {
    x -= mean;
    tmax = std::max(tmax, std::abs(x));
  }
  require(tmax > 0, "perturb_sound_speed: degenerate perturbation");
  const double scale = amplitude * c0 / tmax;
  for (double& x : t) x = c0 + x * scale;
  return out;
}

NoiseResult add_noise(const sensing::SensorData& data, double sigma, uint64_t seed,
                      const std::vector<double>* noise_scale_map) {
  require(sigma >= 0, "add_noise: sigma must be >= 0");
  if (noise_scale_map)
    require(noise_scale_map->size() == static_cast<size_t>(data.m_c),
            "add_noise: noise scale map size mismatch");

  double power = 0;
  for (double v : data.v) power += v * v;
  power /= static_cast<double>(data.v.size());

  NoiseResult res{data, kSnrInfinite};
  res.data.noise_sigma = sigma;
  if (sigma == 0.0) return res;

  Rng rng(seed);
  for (int m = 0; m < data.m_c; m++) {
    const double scale = sigma * (noise_scale_map ? (*noise_scale_map)[m] : 1.0);
    double* tr = res.data.trace(m);
    for (int t = 0; t < data.nt; t++) tr[t] += scale * rng.normal();
  }
  res.snr_db = std::min(kSnrInfinite, 10.0 * std::log10(power / (sigma * sigma)));
  return res;
}

sensing::SensorData bandpass_filter(const sensing::SensorData& data, double f_lo,
                                    double f_hi, double dt) {
  require(dt > 0, "bandpass_filter: dt must be positive");
  const double f_nyq = 0.5 / dt;
  require(f_lo >= 0 && f_lo < f_hi && f_hi <= f_nyq * (1 + 1e-12),
          "bandpass_filter: require 0 <= f_lo < f_hi <= 1/(2 dt)");

  const int nt = data.nt;
  const int nfh = nt / 2 + 1;
  const double ramp = 0.05 * (f_hi - f_lo);
  auto window = [&](double f) {
    if (f < f_lo || f > f_hi) return 0.0;
    if (f_lo > 0 && f < f_lo + ramp) {
      const double s = std::sin(0.5 * M_PI * (f - f_lo) / ramp);
      return s * s;
    }
    if (f > f_hi - ramp) {
      const double s = std::sin(0.5 * M_PI * (f_hi - f) / ramp);
      return s * s;
    }
    return 1.0;
  };

  double* in = fftw_alloc_real(nt);
  fftw_complex* spec = fftw_alloc_complex(nfh);
  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(nt, in, spec, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(nt, spec, in, FFTW_ESTIMATE);
  }

  sensing::SensorData out = data;
  const double norm = 1.0 / nt;
  for (int m = 0; m < data.m_c; m++) {
    std::memcpy(in, data.trace(m), sizeof(double) * nt);
    fftw_execute(fwd);
    for (int k = 0; k < nfh; k++) {
      const double w = window(static_cast<double>(k) / (nt * dt)) * norm;
      spec[k][0] *= w;
      spec[k][1] *= w;
    }
    fftw_execute(bwd);
    std::memcpy(out.trace(m), in, sizeof(double) * nt);
  }
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  fftw_free(in);
  fftw_free(spec);
  return out;
}

}  // namespace cspat::datagen
