#include "densevo/depth_filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace densevo {

void FilterParams::validate() const {
  if (!(beta_strength > 0)) throw std::invalid_argument("beta_strength must be > 0");
  if (!(sigma0_pct > 0)) throw std::invalid_argument("sigma0_pct must be > 0");
  if (!(d_min >= 0 && d_min < d_max)) throw std::invalid_argument("need 0 <= d_min < d_max");
  if (!(tau_lambda > 0)) throw std::invalid_argument("tau_lambda must be > 0");
}

PixelState init_pixel(double depth, double mask, const FilterParams& params) {
  PixelState s;
  s.alpha = std::max(params.beta_strength * mask, kMinBetaCount);
  s.beta = std::max(params.beta_strength * (1.0 - mask), kMinBetaCount);
  s.mu = 1.0 / depth;
  s.sigma = std::max(params.sigma0_pct * s.mu, kMinSigma);
  return s;
}

FilterState init_state(const PriorBundle& priors, const FilterParams& params) {
  FilterState out(priors.depth.width(), priors.depth.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double mask = priors.mask ? (*priors.mask)[i] : 1.0;
    out[i] = init_pixel(priors.depth[i], mask, params);
  }
  return out;
}

double measurement_variance(double depth_range, double pixel_range, const FilterParams& params) {
  if (!(pixel_range > 0)) throw std::invalid_argument("measurement_variance: pixel_range must be > 0");
  const double r = depth_range / pixel_range;
  return r * r * params.tau_lambda * params.tau_lambda;
}

UpdateOutcome update(const PixelState& st, const Measurement& m, const FilterParams& params) {
  UpdateOutcome out{st, false};
  const double sigma2 = st.sigma * st.sigma;
  const double tau2 = m.tau_sq;
  if (!(tau2 > 0) || !std::isfinite(m.d)) return out;

  const double s2 = 1.0 / (1.0 / sigma2 + 1.0 / tau2);
  const double mean = s2 * (st.mu / sigma2 + m.d / tau2);

  const double var = sigma2 + tau2;
  const double diff = m.d - st.mu;
  const double gauss = std::exp(-0.5 * diff * diff / var) / std::sqrt(2.0 * std::numbers::pi * var);
  const double uniform =
      (m.d >= params.d_min && m.d <= params.d_max) ? 1.0 / (params.d_max - params.d_min) : 0.0;

  const double n = st.alpha + st.beta;
  double c1 = st.alpha / n * gauss;
  double c2 = st.beta / n * uniform;
  const double norm = c1 + c2;
  if (!(norm > 1e-300) || !std::isfinite(norm)) return out;
  c1 /= norm;
  c2 /= norm;

  // First two moments of rho under the exact two-component posterior.
  const double f = c1 * (st.alpha + 1.0) / (n + 1.0) + c2 * st.alpha / (n + 1.0);
  const double e = c1 * (st.alpha + 1.0) * (st.alpha + 2.0) / ((n + 1.0) * (n + 2.0)) +
                   c2 * st.alpha * (st.alpha + 1.0) / ((n + 1.0) * (n + 2.0));

  PixelState next;
  next.mu = c1 * mean + c2 * st.mu;
  const double second = c1 * (s2 + mean * mean) + c2 * (sigma2 + st.mu * st.mu);
  next.sigma = std::sqrt(std::max(second - next.mu * next.mu, kMinSigma * kMinSigma));
  next.sigma = std::max(next.sigma, kMinSigma);
  next.alpha = (e - f) / (f - e / f);
  next.beta = next.alpha * (1.0 - f) / f;
  if (!std::isfinite(next.alpha) || !std::isfinite(next.beta) || !(next.alpha > 0) ||
      !(next.beta > 0) || !std::isfinite(next.mu))
    return out;
  next.mu = std::clamp(next.mu, params.d_min, params.d_max);
  return {next, true};
}

void write_filter_state(const FilterState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int w = state.width(), h = state.height();
  Raster<float> a(w, h), b(w, h), mu(w, h), sg(w, h);
  for (std::size_t i = 0; i < state.size(); ++i) {
    a[i] = static_cast<float>(state[i].alpha);
    b[i] = static_cast<float>(state[i].beta);
    mu[i] = static_cast<float>(state[i].mu);
    sg[i] = static_cast<float>(state[i].sigma);
  }
  write_f32_raster(dir / "alpha.f32", a);
  write_f32_raster(dir / "beta.f32", b);
  write_f32_raster(dir / "mu.f32", mu);
  write_f32_raster(dir / "sigma.f32", sg);
}

}  // namespace densevo
