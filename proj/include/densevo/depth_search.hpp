#pragma once

#include <optional>
#include <span>
#include <vector>

#include "densevo/depth_filter.hpp"
#include "densevo/geometry.hpp"
#include "densevo/tracker.hpp"

namespace densevo {

struct SearchConfig {
  int n_samples = 16;
  int patch_radius = 1;            // 3x3 patch
  double min_ncc = 0.5;
  double min_pixel_range = 1e-3;   // minimum epipolar span of the grid (px)
  double min_patch_variance = 1e-6;

  void validate() const;
};

// n_samples equally spaced inverse depths over [mu - 2 sigma, mu + 2 sigma]
// clipped to [d_min, d_max]. Empty when the clipped range is empty.
std::vector<double> depth_grid(const PixelState& state, const SearchConfig& cfg,
                               const FilterParams& params);

// Non-centred normalised correlation, clamped to [-1, 1]; nullopt when either
// patch has zero norm.
std::optional<double> ncc(std::span<const double> patch_kf, std::span<const double> patch_f);

enum class SearchOutcome {
  measured,
  empty_grid,
  patch_outside,
  textureless,
  few_candidates,
  truncated,  // winner borders an unscorable candidate
  no_parallax,
  low_score,
};

struct SearchResult {
  SearchOutcome outcome = SearchOutcome::empty_grid;
  std::optional<Measurement> measurement;
  double best_score = -1.0;
  double pixel_range = 0.0;  // delta_lambda
};

// Keyframe-side inputs for the search (level 0).
struct SearchReference {
  const GrayImage& image;
  const Intrinsics& K;
};

SearchResult search_pixel(const SearchReference& kf, const GrayImage& frame, const Pose& pose,
                          const AffineLight& light, int u, int v, const PixelState& state,
                          const SearchConfig& cfg, const FilterParams& params);

struct PixelMeasurement {
  int u = 0, v = 0;
  Measurement m;
};

struct KeyframeSearch {
  std::vector<PixelMeasurement> measurements;
  Raster<float> best_score;  // -1 where nothing was evaluated
  int n_searched = 0;
};

// Runs search_pixel on every stride-th keyframe pixel.
KeyframeSearch search_keyframe(const SearchReference& kf, const GrayImage& frame, const Pose& pose,
                               const AffineLight& light, const FilterState& state,
                               const SearchConfig& cfg, const FilterParams& params, int stride = 1);

}  // namespace densevo
