#pragma once

#include <span>
#include <vector>

#include "densevo/dataset_io.hpp"
#include "densevo/depth_filter.hpp"
#include "densevo/geometry.hpp"
#include "densevo/pyramid.hpp"
#include "densevo/semantic_raster.hpp"

namespace densevo {

struct KfCriteria {
  int max_frames = 5;
  double min_valid_ratio = 0.7;

  void validate() const;
};

// frames_since_kf >= max_frames, or the last alignment saw too few valid pixels.
bool should_insert(int frames_since_kf, double last_valid_ratio, const KfCriteria& crit);

struct Keyframe {
  int frame_index = 0;
  double timestamp = 0;
  Pose world_from_cam;
  Pyramid pyramid;
  RgbImage color;
  SemanticRaster raw_sem;  // predictor output at insertion
  SemanticRaster sem;      // fused class probabilities
  FilterState filter;
};

// Builds the keyframe attributes and initialises the filter from the priors.
// A missing mask (or use_outlier_mask = false) falls back to an all-ones mask.
// Throws when the frame carries no depth prior.
Keyframe insert_keyframe(const SequenceFrame& frame, const Intrinsics& K, const Pose& world_from_cam,
                         const FilterParams& params, int pyramid_levels, bool use_outlier_mask = true);

inline constexpr double kProbabilityFloor = 1e-6;

// Elementwise product of two class distributions (each floored), renormalised.
std::vector<float> fuse_distributions(std::span<const float> propagated,
                                      std::span<const float> predicted);

struct PropagationStats {
  int n_sources = 0;  // old-keyframe pixels above the inlier threshold
  int n_hit = 0;      // new-keyframe pixels that received a distribution
};

// Splats confident old-keyframe class vectors into the new keyframe using
// depth 1/mu and rel_pose (new-from-old), nearest projected depth winning,
// and fuses them with new_kf.raw_sem. Unhit pixels keep the prediction.
SemanticRaster propagate_semantics(const Keyframe& old_kf, const Keyframe& new_kf,
                                   const Pose& rel_pose, double inlier_threshold = 0.6,
                                   PropagationStats* stats = nullptr);

// 1 / mu per pixel (meters).
Raster<float> keyframe_depth(const Keyframe& kf);

}  // namespace densevo
