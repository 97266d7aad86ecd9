#include "densevo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/SVD>

namespace densevo {

AlignMode parse_align_mode(const std::string& s) {
  if (s == "none") return AlignMode::none;
  if (s == "se3") return AlignMode::se3;
  if (s == "sim3") return AlignMode::sim3;
  throw std::invalid_argument("unknown alignment mode '" + s + "' (none|se3|sim3)");
}

std::string to_string(AlignMode m) {
  switch (m) {
    case AlignMode::none: return "none";
    case AlignMode::se3: return "se3";
    case AlignMode::sim3: return "sim3";
  }
  return "?";
}

Alignment umeyama(const std::vector<Vec3>& src, const std::vector<Vec3>& dst, bool with_scale) {
  if (src.size() != dst.size() || src.empty())
    throw std::invalid_argument("umeyama: point sets must be non-empty and equal in size");
  const double n = static_cast<double>(src.size());
  Vec3 ms = Vec3::Zero(), md = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms += src[i];
    md += dst[i];
  }
  ms /= n;
  md /= n;
  Mat3 cov = Mat3::Zero();
  double var_src = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    cov += (dst[i] - md) * (src[i] - ms).transpose();
    var_src += (src[i] - ms).squaredNorm();
  }
  cov /= n;
  var_src /= n;

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  Mat3 S = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2, 2) = -1;

  Alignment a;
  const double tol = 1e-12 * std::max(1.0, d(0));
  a.degenerate = d(1) <= tol;
  a.rotation = svd.matrixU() * S * svd.matrixV().transpose();
  if (with_scale) {
    if (!(var_src > 0)) throw std::invalid_argument("umeyama: source points coincide; scale undefined");
    a.scale = (d.asDiagonal() * S).trace() / var_src;
  }
  a.translation = md - a.scale * a.rotation * ms;
  return a;
}

namespace {

void check_pair(const Trajectory& est, const Trajectory& gt) {
  if (est.size() != gt.size())
    throw std::invalid_argument("trajectory length mismatch: " + std::to_string(est.size()) +
                                " vs " + std::to_string(gt.size()));
  for (std::size_t i = 0; i < est.size(); ++i)
    if (std::abs(est[i].timestamp - gt[i].timestamp) > 1e-4)
      throw std::invalid_argument("timestamp mismatch at pose " + std::to_string(i));
}

std::vector<Vec3> positions(const Trajectory& t) {
  std::vector<Vec3> out;
  out.reserve(t.size());
  for (const auto& e : t) out.push_back(e.pose.translation());
  return out;
}

}  // namespace

Alignment fit_alignment(const Trajectory& est, const Trajectory& gt, AlignMode mode) {
  check_pair(est, gt);
  if (mode == AlignMode::none) return {};
  if (mode == AlignMode::sim3 && est.size() < 3)
    throw std::invalid_argument("sim3 alignment needs at least 3 poses");
  if (est.empty()) throw std::invalid_argument("cannot align empty trajectories");
  return umeyama(positions(est), positions(gt), mode == AlignMode::sim3);
}

Trajectory apply_alignment(const Trajectory& est, const Alignment& a) {
  Trajectory out;
  out.reserve(est.size());
  for (const auto& e : est) {
    const Pose p(a.rotation * e.pose.rotation(),
                 a.scale * (a.rotation * e.pose.translation()) + a.translation);
    out.push_back({e.timestamp, p});
  }
  return out;
}

Trajectory align(const Trajectory& est, const Trajectory& gt, AlignMode mode) {
  return apply_alignment(est, fit_alignment(est, gt, mode));
}

double ate_rmse(const Trajectory& est, const Trajectory& gt, AlignMode mode) {
  const Trajectory aligned = align(est, gt, mode);
  if (aligned.empty()) return 0.0;
  double sum = 0;
  for (std::size_t i = 0; i < aligned.size(); ++i)
    sum += (aligned[i].pose.translation() - gt[i].pose.translation()).squaredNorm();
  return std::sqrt(sum / static_cast<double>(aligned.size()));
}

SnippetAte snippet_ate(const Trajectory& est, const Trajectory& gt, int n, AlignMode mode) {
  if (n < 2) throw std::invalid_argument("snippet_ate: N must be >= 2");
  check_pair(est, gt);
  SnippetAte out;
  const std::size_t N = static_cast<std::size_t>(n);
  for (std::size_t s = 0; s + N <= est.size(); s += N) {
    const Trajectory e(est.begin() + s, est.begin() + s + N);
    const Trajectory g(gt.begin() + s, gt.begin() + s + N);
    out.per_snippet.push_back(ate_rmse(e, g, mode));
  }
  out.count = static_cast<int>(out.per_snippet.size());
  if (out.count == 0) return out;
  for (double v : out.per_snippet) out.mean += v;
  out.mean /= out.count;
  double var = 0;
  for (double v : out.per_snippet) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / out.count);
  return out;
}

double miou(const LabelImage& pred, const LabelImage& gt, int n_classes) {
  if (pred.width() != gt.width() || pred.height() != gt.height())
    throw std::invalid_argument("miou: label images differ in size");
  std::vector<long> inter(n_classes, 0), uni(n_classes, 0), in_gt(n_classes, 0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt[i], p = pred[i];
    if (g >= n_classes || p >= n_classes) throw std::invalid_argument("miou: label out of range");
    ++in_gt[g];
    if (g == p) {
      ++inter[g];
      ++uni[g];
    } else {
      ++uni[g];
      ++uni[p];
    }
  }
  double sum = 0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    if (in_gt[c] == 0) continue;
    sum += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    ++present;
  }
  return present ? sum / present : 0.0;
}

double trajectory_length(const Trajectory& traj) {
  double len = 0;
  for (std::size_t i = 1; i < traj.size(); ++i)
    len += (traj[i].pose.translation() - traj[i - 1].pose.translation()).norm();
  return len;
}

Trajectory associate(const Trajectory& est, const Trajectory& gt, double tol) {
  Trajectory out;
  out.reserve(est.size());
  for (const auto& e : est) {
    // gt is time-ordered; est may not be.
    const auto it = std::lower_bound(gt.begin(), gt.end(), e.timestamp - tol,
                                     [](const TrajectoryEntry& g, double t) { return g.timestamp < t; });
    if (it == gt.end() || std::abs(it->timestamp - e.timestamp) > tol)
      throw std::invalid_argument("no ground-truth pose at t=" + std::to_string(e.timestamp));
    out.push_back(*it);
  }
  return out;
}

}  // namespace densevo
