#pragma once

#include <string>

#include "densevo/dataset_io.hpp"
#include "densevo/raster.hpp"

namespace densevo {

// All depths here are inverse depths (1/m).
struct FilterParams {
  double beta_strength = 10.0;  // alpha0 + beta0
  double sigma0_pct = 0.2;      // sigma0 as a fraction of the prior inverse depth
  double d_min = 1e-3;          // outlier support [d_min, d_max]
  double d_max = 2.0;
  double tau_lambda = 1.0;      // pixel noise std (px)

  void validate() const;
};

// Beta(rho | alpha, beta) x N(d | mu, sigma^2) for one pixel.
struct PixelState {
  double alpha = 1;
  double beta = 1;
  double mu = 0;
  double sigma = 1;
};

using FilterState = Raster<PixelState>;

struct Measurement {
  double d = 0;       // inverse-depth observation
  double tau_sq = 0;  // its variance
};

struct UpdateOutcome {
  PixelState state;
  bool accepted = false;
};

inline constexpr double kMinBetaCount = 1e-3;
inline constexpr double kMinSigma = 1e-7;

PixelState init_pixel(double depth, double mask, const FilterParams& params);

// alpha0 = S * mask, beta0 = S * (1 - mask), both floored at 1e-3;
// mu0 = 1 / depth, sigma0 = sigma0_pct * mu0. A missing mask is treated as 1.
FilterState init_state(const PriorBundle& priors, const FilterParams& params);

// tau^2 = (delta_d / delta_lambda)^2 * tau_lambda^2.
double measurement_variance(double depth_range, double pixel_range, const FilterParams& params);

// Moment-matched posterior after one measurement under the Gaussian + uniform
// mixture. Rejected (state unchanged) when the evidence vanishes numerically.
UpdateOutcome update(const PixelState& state, const Measurement& m, const FilterParams& params);

inline double inlier_prob(const PixelState& s) { return s.alpha / (s.alpha + s.beta); }

// Debug dump into dir: alpha.f32, beta.f32, mu.f32, sigma.f32.
void write_filter_state(const FilterState& state, const std::filesystem::path& dir);

}  // namespace densevo
