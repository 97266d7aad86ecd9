#include "densevo/keyframe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace densevo {

void KfCriteria::validate() const {
  if (max_frames < 1) throw std::invalid_argument("max_frames must be >= 1");
  if (!(min_valid_ratio > 0 && min_valid_ratio < 1))
    throw std::invalid_argument("min_valid_ratio must be in (0, 1)");
}

bool should_insert(int frames_since_kf, double last_valid_ratio, const KfCriteria& crit) {
  return frames_since_kf >= crit.max_frames || last_valid_ratio < crit.min_valid_ratio;
}

Keyframe insert_keyframe(const SequenceFrame& frame, const Intrinsics& K, const Pose& world_from_cam,
                         const FilterParams& params, int pyramid_levels, bool use_outlier_mask) {
  if (!frame.priors)
    throw std::runtime_error("frame " + std::to_string(frame.index) +
                             ": keyframe insertion needs a depth prior");
  Keyframe kf;
  kf.frame_index = frame.index;
  kf.timestamp = frame.timestamp;
  kf.world_from_cam = world_from_cam;
  kf.color = frame.image;
  kf.pyramid = build_pyramid(to_gray(frame.image), K, pyramid_levels);

  PriorBundle priors = *frame.priors;
  if (!use_outlier_mask) priors.mask.reset();
  kf.filter = init_state(priors, params);
  if (priors.sem) {
    kf.raw_sem = *priors.sem;
    kf.sem = *priors.sem;
  }
  return kf;
}

std::vector<float> fuse_distributions(std::span<const float> propagated,
                                      std::span<const float> predicted) {
  if (propagated.size() != predicted.size())
    throw std::invalid_argument("fuse_distributions: class count mismatch");
  std::vector<double> prod(predicted.size());
  double z = 0;
  for (std::size_t c = 0; c < prod.size(); ++c) {
    prod[c] = std::max<double>(propagated[c], kProbabilityFloor) *
              std::max<double>(predicted[c], kProbabilityFloor);
    z += prod[c];
  }
  std::vector<float> out(prod.size());
  for (std::size_t c = 0; c < prod.size(); ++c) out[c] = static_cast<float>(prod[c] / z);
  return out;
}

SemanticRaster propagate_semantics(const Keyframe& old_kf, const Keyframe& new_kf,
                                   const Pose& rel_pose, double inlier_threshold,
                                   PropagationStats* stats) {
  SemanticRaster fused = new_kf.raw_sem;
  if (old_kf.sem.empty() || new_kf.raw_sem.empty()) return fused;
  if (old_kf.sem.n_classes() != new_kf.raw_sem.n_classes())
    throw std::invalid_argument("propagate_semantics: class count mismatch");

  const Intrinsics& K_old = old_kf.pyramid[0].K;
  const Intrinsics& K_new = new_kf.pyramid[0].K;
  const int w = K_new.width, h = K_new.height;
  Raster<double> zbuf(w, h, std::numeric_limits<double>::infinity());
  Raster<int> source(w, h, -1);

  PropagationStats st;
  const FilterState& filter = old_kf.filter;
  for (int v = 0; v < filter.height(); ++v)
    for (int u = 0; u < filter.width(); ++u) {
      const PixelState& s = filter(u, v);
      if (inlier_prob(s) < inlier_threshold || !(s.mu > 0)) continue;
      ++st.n_sources;
      const Vec3 x = rel_pose * back_project({double(u), double(v)}, 1.0 / s.mu, K_old);
      if (!(x.z() > 0)) continue;
      const long tu = std::lround(K_new.fx * x.x() / x.z() + K_new.cx);
      const long tv = std::lround(K_new.fy * x.y() / x.z() + K_new.cy);
      if (tu < 0 || tv < 0 || tu >= w || tv >= h) continue;
      const int iu = static_cast<int>(tu), iv = static_cast<int>(tv);
      if (x.z() < zbuf(iu, iv)) {
        zbuf(iu, iv) = x.z();
        source(iu, iv) = v * filter.width() + u;
      }
    }

  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const int src = source(u, v);
      if (src < 0) continue;
      ++st.n_hit;
      const auto prop = old_kf.sem.pixel(src % filter.width(), src / filter.width());
      const auto pred = new_kf.raw_sem.pixel(u, v);
      fused.set_pixel(u, v, fuse_distributions(prop, pred));
    }
  if (stats) *stats = st;
  return fused;
}

Raster<float> keyframe_depth(const Keyframe& kf) {
  Raster<float> out(kf.filter.width(), kf.filter.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(1.0 / kf.filter[i].mu);
  return out;
}

}  // namespace densevo
