#pragma once

#include <string>
#include <vector>

#include "densevo/dataset_io.hpp"
#include "densevo/geometry.hpp"

namespace densevo {

enum class AlignMode { none, se3, sim3 };

AlignMode parse_align_mode(const std::string& s);
std::string to_string(AlignMode m);

// x -> scale * R x + t, applied to the estimate.
struct Alignment {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
  bool degenerate = false;  // rank-deficient (e.g. collinear) point sets
};

// Closed-form least-squares fit dst ~ scale * R src + t (Umeyama).
Alignment umeyama(const std::vector<Vec3>& src, const std::vector<Vec3>& dst, bool with_scale);

// Fit of the estimate's positions onto the ground truth. Throws on length or
// timestamp mismatch and on fewer than 3 poses for sim3.
Alignment fit_alignment(const Trajectory& est, const Trajectory& gt, AlignMode mode);

Trajectory apply_alignment(const Trajectory& est, const Alignment& a);
Trajectory align(const Trajectory& est, const Trajectory& gt, AlignMode mode);

// sqrt(mean ||p_est - p_gt||^2) after alignment.
double ate_rmse(const Trajectory& est, const Trajectory& gt, AlignMode mode);

struct SnippetAte {
  double mean = 0;
  double std = 0;  // population standard deviation across snippets
  int count = 0;
  std::vector<double> per_snippet;
};

// Consecutive N-pose windows of both trajectories, aligned independently.
SnippetAte snippet_ate(const Trajectory& est, const Trajectory& gt, int n, AlignMode mode);

// Mean IoU over classes that appear in gt.
double miou(const LabelImage& pred, const LabelImage& gt, int n_classes);

double trajectory_length(const Trajectory& traj);

// Entries of gt whose timestamps match est (within tol), in est order. Throws
// if an est timestamp has no match.
Trajectory associate(const Trajectory& est, const Trajectory& gt, double tol = 1e-4);

}  // namespace densevo
