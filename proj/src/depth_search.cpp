#include "densevo/depth_search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace densevo {

void SearchConfig::validate() const {
  if (n_samples < 3) throw std::invalid_argument("n_samples must be >= 3");
  if (patch_radius < 0) throw std::invalid_argument("patch_radius must be >= 0");
  if (!(min_ncc > -1 && min_ncc < 1)) throw std::invalid_argument("min_ncc must be in (-1, 1)");
  if (!(min_pixel_range >= 0)) throw std::invalid_argument("min_pixel_range must be >= 0");
  if (!(min_patch_variance >= 0)) throw std::invalid_argument("min_patch_variance must be >= 0");
}

std::vector<double> depth_grid(const PixelState& state, const SearchConfig& cfg,
                               const FilterParams& params) {
  const double lo = std::max(state.mu - 2.0 * state.sigma, params.d_min);
  const double hi = std::min(state.mu + 2.0 * state.sigma, params.d_max);
  if (!(hi > lo)) return {};
  std::vector<double> grid(cfg.n_samples);
  const double step = (hi - lo) / (cfg.n_samples - 1);
  for (int i = 0; i < cfg.n_samples; ++i) grid[i] = lo + step * i;
  grid.back() = hi;
  return grid;
}

std::optional<double> ncc(std::span<const double> patch_kf, std::span<const double> patch_f) {
  if (patch_kf.size() != patch_f.size()) throw std::invalid_argument("ncc: patch size mismatch");
  double cross = 0, nk = 0, nf = 0;
  for (std::size_t i = 0; i < patch_kf.size(); ++i) {
    cross += patch_kf[i] * patch_f[i];
    nk += patch_kf[i] * patch_kf[i];
    nf += patch_f[i] * patch_f[i];
  }
  if (!(nk > 0) || !(nf > 0)) return std::nullopt;
  return std::clamp(cross / (std::sqrt(nk) * std::sqrt(nf)), -1.0, 1.0);
}

SearchResult search_pixel(const SearchReference& kf, const GrayImage& frame, const Pose& pose,
                          const AffineLight& light, int u, int v, const PixelState& state,
                          const SearchConfig& cfg, const FilterParams& params) {
  SearchResult res;
  const int r = cfg.patch_radius;
  if (u - r < 0 || v - r < 0 || u + r >= kf.image.width() || v + r >= kf.image.height()) {
    res.outcome = SearchOutcome::patch_outside;
    return res;
  }
  const auto grid = depth_grid(state, cfg, params);
  if (grid.empty()) {
    res.outcome = SearchOutcome::empty_grid;
    return res;
  }

  const int side = 2 * r + 1;
  const std::size_t n = static_cast<std::size_t>(side) * side;
  std::vector<double> lit(n), sampled(n);
  std::vector<Vec3> rays(n);
  double mean = 0;
  for (int dv = -r, i = 0; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du, ++i) {
      const double raw = kf.image(u + du, v + dv);
      mean += raw;
      lit[static_cast<std::size_t>(i)] = light.a * raw + light.b;
      rays[static_cast<std::size_t>(i)] = back_project({double(u + du), double(v + dv)}, 1.0, kf.K);
    }
  mean /= static_cast<double>(n);
  double var = 0;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du) {
      const double d = kf.image(u + du, v + dv) - mean;
      var += d * d;
    }
  var /= static_cast<double>(n);
  if (var < cfg.min_patch_variance) {
    res.outcome = SearchOutcome::textureless;
    return res;
  }

  // Epipolar span of the grid: the centre pixel projected at both endpoints.
  const PixelCoord centre{double(u), double(v)};
  const auto near_end = project(centre, 1.0 / grid.back(), pose, kf.K);
  const auto far_end = project(centre, 1.0 / grid.front(), pose, kf.K);
  if (near_end.in_front && far_end.in_front)
    res.pixel_range = std::hypot(near_end.pixel.u - far_end.pixel.u, near_end.pixel.v - far_end.pixel.v);

  const Mat3& R = pose.rotation();
  const Vec3& t = pose.translation();
  int n_valid = 0;
  double best_d = 0;
  std::size_t best_i = 0;
  std::vector<bool> scored(grid.size(), false);
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double d = grid[gi];
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      // One shared inverse depth for the whole patch.
      const Vec3 x = R * (rays[i] / d) + t;
      if (!(x.z() > 0)) {
        ok = false;
        break;
      }
      const PixelCoord p{kf.K.fx * x.x() / x.z() + kf.K.cx, kf.K.fy * x.y() / x.z() + kf.K.cy};
      const auto val = bilinear_value(frame, p);
      if (!val) {
        ok = false;
        break;
      }
      sampled[i] = *val;
    }
    if (!ok) continue;
    const auto score = ncc(lit, sampled);
    if (!score) continue;
    ++n_valid;
    scored[gi] = true;
    if (*score > res.best_score ||
        (*score == res.best_score && std::abs(d - state.mu) < std::abs(best_d - state.mu))) {
      res.best_score = *score;
      best_d = d;
      best_i = gi;
    }
  }

  if (n_valid < 2) {
    res.outcome = SearchOutcome::few_candidates;
    return res;
  }
  // A winner next to an unscorable candidate may only be the best of a clipped
  // segment (e.g. the true match left the image).
  if ((best_i > 0 && !scored[best_i - 1]) || (best_i + 1 < grid.size() && !scored[best_i + 1])) {
    res.outcome = SearchOutcome::truncated;
    return res;
  }
  if (!(res.pixel_range >= cfg.min_pixel_range) || res.pixel_range < 1e-6) {
    res.outcome = SearchOutcome::no_parallax;
    return res;
  }
  if (res.best_score < cfg.min_ncc) {
    res.outcome = SearchOutcome::low_score;
    return res;
  }
  res.outcome = SearchOutcome::measured;
  res.measurement =
      Measurement{best_d, measurement_variance(grid.back() - grid.front(), res.pixel_range, params)};
  return res;
}

KeyframeSearch search_keyframe(const SearchReference& kf, const GrayImage& frame, const Pose& pose,
                               const AffineLight& light, const FilterState& state,
                               const SearchConfig& cfg, const FilterParams& params, int stride) {
  if (stride < 1) throw std::invalid_argument("search_keyframe: stride must be >= 1");
  KeyframeSearch out;
  out.best_score = Raster<float>(kf.image.width(), kf.image.height(), -1.0f);
  for (int v = 0; v < kf.image.height(); v += stride)
    for (int u = 0; u < kf.image.width(); u += stride) {
      const SearchResult r = search_pixel(kf, frame, pose, light, u, v, state(u, v), cfg, params);
      ++out.n_searched;
      if (r.best_score > -1.0) out.best_score(u, v) = static_cast<float>(r.best_score);
      if (r.measurement) out.measurements.push_back({u, v, *r.measurement});
    }
  return out;
}

}  // namespace densevo
