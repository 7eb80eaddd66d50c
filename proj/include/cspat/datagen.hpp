#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cspat/core.hpp"
#include "cspat/sensing.hpp"

#include "json.hpp"

namespace cspat::datagen {

// Switchable model perturbations for no-inverse-crime data generation:
// f^c = C W_s A(c0 + c~) p0 + W_n eps. All components disabled (zeros)
// reproduces the inverse-crime pipeline bit-exactly.
struct PerturbationSpec {
  double sigma_s = 0.0;                // log-scale std of sensor sensitivity
  double sigma_n = 0.0;                // log-scale std of noise-variance variation
  double sound_speed_amplitude = 0.0;  // fraction of c0
  double noise_sigma = 0.0;            // additive white noise std
  uint64_t seed_sensitivity = 1;
  uint64_t seed_noise_map = 2;
  uint64_t seed_sound_speed = 3;
  uint64_t seed_noise = 4;

  void validate() const {
    require(sigma_s >= 0 && sigma_n >= 0 && noise_sigma >= 0,
            "perturbation parameters must be non-negative");
    require(sound_speed_amplitude >= 0 && sound_speed_amplitude < 0.3,
            "sound_speed_amplitude must be in [0, 0.3)");
  }
};

enum class PhantomKind { balls, tubes, vessel_tree, tumor };

PhantomKind phantom_kind_from_string(const std::string& s);

// Synthetic non-negative phantoms, deterministic per seed. The tumor kind
// grows a connected blob from a random seed voxel by iterative stochastic
// surface dilation, non-intersecting with the vessel tree it is embedded in.
Field make_phantom(PhantomKind kind, const Grid& grid, uint64_t seed,
                   const nlohmann::json& params);

// Nonzero voxels v -> (2v + 1)/3, zero voxels stay zero. Requires max(p0)=1.
Field remap_contrast(const Field& p0);

// Block means over factor^3 blocks; dims must be divisible by factor.
Field downsample_average(const Field& field, int factor = 2);

struct PresmoothResult {
  Field field;
  double cutoff_hz;  // grid-supported band edge f* = c/(2 max(spacing))
};

// Radial spectral low-pass with a raised-cosine roll-off starting at 0.9 of
// the grid Nyquist wavenumber; output clamped non-negative.
PresmoothResult presmooth(const Field& p0, const Grid& grid);

// Log-normal channel weights w_i = exp(sigma * X_i), X_i iid standard normal.
std::vector<double> lognormal_weights(size_t count, double sigma, uint64_t seed);

// Per detection-voxel sensitivity weights over the plane.
std::vector<double> sensitivity_map(std::array<int, 2> plane_dims, double sigma_s,
                                    uint64_t seed);

// Multiply each detection-voxel trace by its weight.
void apply_sensitivity(PlaneSeries& series, const std::vector<double>& weights);

// c0 + c~ where c~ is a smooth Gaussian random field plus the normalized p0,
// centered (mean 0) and scaled (max |c~| = amplitude * c0).
Field perturb_sound_speed(double c0, const Field& p0, double amplitude, uint64_t seed);

struct NoiseResult {
  sensing::SensorData data;
  double snr_db;  // 10 log10(mean clean power / sigma^2); 300 dB sentinel at sigma=0
};

inline constexpr double kSnrInfinite = 300.0;

NoiseResult add_noise(const sensing::SensorData& data, double sigma, uint64_t seed,
                      const std::vector<double>* noise_scale_map = nullptr);

// Zero-phase band-pass via a symmetric spectral window, applied per trace.
sensing::SensorData bandpass_filter(const sensing::SensorData& data, double f_lo,
                                    double f_hi, double dt);

}  // namespace cspat::datagen
