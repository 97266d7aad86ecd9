#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "densevo/depth_filter.hpp"
#include "densevo/geometry.hpp"
#include "densevo/pyramid.hpp"

namespace densevo {

// Keyframe intensities are modelled as a * I_kf + b.
struct AffineLight {
  double a = 1.0;
  double b = 0.0;
};

struct TrackConfig {
  double huber_delta = 0.01;     // luminance
  double affine_weight = 1e-2;   // w, against the |V|-normalised data term
  int max_iters = 30;            // per pyramid level
  double convergence_tol = 1e-6; // norm of the 8-dim Gauss-Newton increment
  double min_valid_ratio = 0.1;  // below this the frame counts as lost
  int levels = 4;
  bool motion_model = true;

  void validate() const;
};

// One pyramid level of the keyframe as seen by the aligner. Pixels whose
// inverse depth is not positive are outside the reference domain.
struct ReferenceLevel {
  GrayImage image;
  Intrinsics K;
  Raster<float> inv_depth;
  Raster<float> weight;  // W(p)
};

struct TrackingReference {
  std::vector<ReferenceLevel> levels;
};

// inv_depth = mu; W(p) = E[rho] when down_weighting, else 1. Coarser levels
// average the valid children.
TrackingReference make_reference(const Pyramid& kf_pyramid, const FilterState& filter,
                                 bool down_weighting);

double huber(double r, double delta);
double huber_weight(double r, double delta);

struct PixelResidual {
  int u = 0, v = 0;
  double r = 0;
  double weight = 0;  // W(p) * huber_weight(r)
  bool valid = false;
};

struct ResidualSet {
  std::vector<PixelResidual> pixels;  // one per reference-domain pixel
  int n_valid = 0;
  int n_total = 0;
  double data_cost = 0;  // (1/|V|) sum W huber(r)
  double reg_cost = 0;   // w [(a-1)^2 + b^2]

  double cost() const { return data_cost + reg_cost; }
  double valid_ratio() const { return n_total ? static_cast<double>(n_valid) / n_total : 0.0; }
  bool failed() const { return n_valid == 0; }
};

// r(p) = I_f(pi(p)) - (a I_kf(p) + b).
ResidualSet residuals(const GrayImage& frame, const ReferenceLevel& ref, const Pose& pose,
                      const AffineLight& light, const TrackConfig& cfg);

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Row8 = Eigen::Matrix<double, 1, 8>;

// Residual at reference pixel (u, v) and its derivative w.r.t. the state
// (left-multiplied twist, a, b). nullopt when the pixel is not valid.
struct ResidualJacobian {
  double r;
  Row8 J;
};
std::optional<ResidualJacobian> residual_jacobian(const GrayImage& frame, const ReferenceLevel& ref,
                                                  int u, int v, const Pose& pose,
                                                  const AffineLight& light);

struct NormalEquations {
  Mat8 H = Mat8::Zero();
  Vec8 g = Vec8::Zero();
  ResidualSet residuals;
};

// Gauss-Newton normal equations of the full objective (data + affine prior).
NormalEquations linearize(const GrayImage& frame, const ReferenceLevel& ref, const Pose& pose,
                          const AffineLight& light, const TrackConfig& cfg);

// Apply an 8-dim increment: pose <- exp(xi) * pose, (a, b) += (da, db).
void apply_increment(const Vec8& delta, Pose& pose, AffineLight& light);

enum class TrackStatus { ok, no_valid_pixels, low_valid_ratio };

struct TrackResult {
  Pose pose;  // keyframe -> frame
  AffineLight light;
  double valid_ratio = 0;
  double final_cost = 0;
  double initial_cost = 0;  // full-resolution cost at the initial state
  bool converged = false;
  int iterations = 0;
  std::vector<double> cost_trace;  // one entry per accepted state, all levels
  TrackStatus status = TrackStatus::ok;

  bool failed() const { return status != TrackStatus::ok; }
};

TrackResult solve_level(const GrayImage& frame, const ReferenceLevel& ref, const Pose& init_pose,
                        const AffineLight& init_light, const TrackConfig& cfg);

// Coarse-to-fine alignment over min(cfg.levels, available) levels.
TrackResult track(const Pyramid& frame_pyr, const TrackingReference& ref, const TrackConfig& cfg,
                  const Pose& init_pose, const AffineLight& init_light = {});

// World-from-camera poses of the two most recent frames.
struct PoseHistory {
  std::optional<Pose> last;
  std::optional<Pose> before_last;

  void push(const Pose& world_from_cam) {
    before_last = last;
    last = world_from_cam;
  }
};

// Initial keyframe->frame pose: the last pose advanced by the last relative
// motion when the motion model is on, otherwise the last pose.
Pose predict_initial_pose(const PoseHistory& history, const Pose& kf_world_from_cam,
                          bool motion_model);

TrackResult track(const Pyramid& frame_pyr, const TrackingReference& ref, const TrackConfig& cfg,
                  const PoseHistory& history, const Pose& kf_world_from_cam,
                  const AffineLight& init_light = {});

}  // namespace densevo
