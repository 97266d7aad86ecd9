#include "densevo/tracker.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace densevo {

void TrackConfig::validate() const {
  if (!(huber_delta > 0)) throw std::invalid_argument("huber_delta must be > 0");
  if (!(affine_weight >= 0)) throw std::invalid_argument("affine_weight must be >= 0");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(convergence_tol > 0)) throw std::invalid_argument("convergence_tol must be > 0");
  if (!(min_valid_ratio > 0 && min_valid_ratio <= 1))
    throw std::invalid_argument("track_min_valid_ratio must be in (0, 1]");
  if (levels < 1) throw std::invalid_argument("levels must be >= 1");
}

namespace {

// Average of the valid children; invalid (0) when none are valid.
void downsample_masked(const Raster<float>& inv_depth, const Raster<float>& weight,
                       Raster<float>& out_depth, Raster<float>& out_weight) {
  const int w = inv_depth.width() / 2, h = inv_depth.height() / 2;
  out_depth = Raster<float>(w, h, 0.0f);
  out_weight = Raster<float>(w, h, 0.0f);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double sd = 0, sw = 0;
      int n = 0;
      for (int dv = 0; dv < 2; ++dv)
        for (int du = 0; du < 2; ++du) {
          const float d = inv_depth(2 * u + du, 2 * v + dv);
          if (d > 0) {
            sd += d;
            sw += weight(2 * u + du, 2 * v + dv);
            ++n;
          }
        }
      if (n > 0) {
        out_depth(u, v) = static_cast<float>(sd / n);
        out_weight(u, v) = static_cast<float>(sw / n);
      }
    }
}

}  // namespace

TrackingReference make_reference(const Pyramid& kf_pyramid, const FilterState& filter,
                                 bool down_weighting) {
  if (kf_pyramid.size() == 0) throw std::invalid_argument("make_reference: empty pyramid");
  const auto& base = kf_pyramid[0].image;
  if (filter.width() != base.width() || filter.height() != base.height())
    throw std::invalid_argument("make_reference: filter state size does not match keyframe");
  TrackingReference ref;
  ReferenceLevel l0{base, kf_pyramid[0].K, Raster<float>(base.width(), base.height()),
                    Raster<float>(base.width(), base.height())};
  for (std::size_t i = 0; i < filter.size(); ++i) {
    l0.inv_depth[i] = static_cast<float>(filter[i].mu);
    l0.weight[i] = down_weighting ? static_cast<float>(inlier_prob(filter[i])) : 1.0f;
  }
  ref.levels.push_back(std::move(l0));
  for (int l = 1; l < kf_pyramid.size(); ++l) {
    ReferenceLevel lvl;
    lvl.image = kf_pyramid[l].image;
    lvl.K = kf_pyramid[l].K;
    downsample_masked(ref.levels.back().inv_depth, ref.levels.back().weight, lvl.inv_depth,
                      lvl.weight);
    ref.levels.push_back(std::move(lvl));
  }
  return ref;
}

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_weight(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 1.0 : delta / a;
}

namespace {

double affine_prior(const AffineLight& light, const TrackConfig& cfg) {
  const double da = light.a - 1.0;
  return cfg.affine_weight * (da * da + light.b * light.b);
}

struct Warp {
  Vec3 x;  // point in the frame camera
  PixelCoord pixel;
};

std::optional<Warp> warp(const ReferenceLevel& ref, int u, int v, const Pose& pose) {
  const float rho = ref.inv_depth(u, v);
  if (!(rho > 0)) return std::nullopt;
  const Intrinsics& K = ref.K;
  const Vec3 x = pose * Vec3((u - K.cx) / K.fx / rho, (v - K.cy) / K.fy / rho, 1.0 / rho);
  if (!(x.z() > 0)) return std::nullopt;
  const PixelCoord p{K.fx * x.x() / x.z() + K.cx, K.fy * x.y() / x.z() + K.cy};
  if (!inside_image(p, K.width, K.height)) return std::nullopt;
  return Warp{x, p};
}

Row8 jacobian_row(const Warp& w, const Sample& s, double kf_intensity, const Intrinsics& K) {
  const double iz = 1.0 / w.x.z();
  const double X = w.x.x(), Y = w.x.y();
  // d(u', v') / dX', folded with the image gradient.
  const double gu = s.du * K.fx * iz, gv = s.dv * K.fy * iz;
  const Vec3 dIdX(gu, gv, -(gu * X + gv * Y) * iz);
  // dX'/d(omega) = -[X']x, dX'/dv = I.
  Row8 J;
  J.segment<3>(0) = w.x.cross(dIdX).transpose();
  J.segment<3>(3) = dIdX.transpose();
  J(6) = -kf_intensity;
  J(7) = -1.0;
  return J;
}

}  // namespace

ResidualSet residuals(const GrayImage& frame, const ReferenceLevel& ref, const Pose& pose,
                      const AffineLight& light, const TrackConfig& cfg) {
  ResidualSet out;
  const int w = ref.image.width(), h = ref.image.height();
  out.pixels.reserve(static_cast<std::size_t>(w) * h);
  double sum = 0;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      if (!(ref.inv_depth(u, v) > 0)) continue;
      ++out.n_total;
      PixelResidual px{u, v, 0.0, 0.0, false};
      if (const auto wp = warp(ref, u, v, pose)) {
        if (const auto val = bilinear_value(frame, wp->pixel)) {
          px.r = *val - (light.a * ref.image(u, v) + light.b);
          px.valid = true;
          const double W = ref.weight(u, v);
          px.weight = W * huber_weight(px.r, cfg.huber_delta);
          sum += W * huber(px.r, cfg.huber_delta);
          ++out.n_valid;
        }
      }
      out.pixels.push_back(px);
    }
  out.data_cost = out.n_valid ? sum / out.n_valid : 0.0;
  out.reg_cost = affine_prior(light, cfg);
  return out;
}

std::optional<ResidualJacobian> residual_jacobian(const GrayImage& frame, const ReferenceLevel& ref,
                                                  int u, int v, const Pose& pose,
                                                  const AffineLight& light) {
  const auto wp = warp(ref, u, v, pose);
  if (!wp) return std::nullopt;
  const auto s = bilinear_sample(frame, wp->pixel);
  if (!s) return std::nullopt;
  const double ikf = ref.image(u, v);
  return ResidualJacobian{s->value - (light.a * ikf + light.b), jacobian_row(*wp, *s, ikf, ref.K)};
}

NormalEquations linearize(const GrayImage& frame, const ReferenceLevel& ref, const Pose& pose,
                          const AffineLight& light, const TrackConfig& cfg) {
  NormalEquations ne;
  ResidualSet& rs = ne.residuals;
  const int w = ref.image.width(), h = ref.image.height();
  rs.pixels.reserve(static_cast<std::size_t>(w) * h);
  double sum = 0;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      if (!(ref.inv_depth(u, v) > 0)) continue;
      ++rs.n_total;
      PixelResidual px{u, v, 0.0, 0.0, false};
      const auto wp = warp(ref, u, v, pose);
      const auto s = wp ? bilinear_sample(frame, wp->pixel) : std::nullopt;
      if (s) {
        const double ikf = ref.image(u, v);
        px.r = s->value - (light.a * ikf + light.b);
        px.valid = true;
        const double W = ref.weight(u, v);
        px.weight = W * huber_weight(px.r, cfg.huber_delta);
        sum += W * huber(px.r, cfg.huber_delta);
        ++rs.n_valid;
        if (px.weight > 0) {
          const Row8 J = jacobian_row(*wp, *s, ikf, ref.K);
          ne.H.selfadjointView<Eigen::Upper>().rankUpdate(J.transpose(), px.weight);
          ne.g.noalias() += (px.weight * px.r) * J.transpose();
        }
      }
      rs.pixels.push_back(px);
    }
  ne.H = ne.H.selfadjointView<Eigen::Upper>();
  if (rs.n_valid > 0) {
    ne.H /= rs.n_valid;
    ne.g /= rs.n_valid;
  }
  rs.data_cost = rs.n_valid ? sum / rs.n_valid : 0.0;
  rs.reg_cost = affine_prior(light, cfg);
  const double w2 = 2.0 * cfg.affine_weight;
  ne.H(6, 6) += w2;
  ne.H(7, 7) += w2;
  ne.g(6) += w2 * (light.a - 1.0);
  ne.g(7) += w2 * light.b;
  return ne;
}

void apply_increment(const Vec8& delta, Pose& pose, AffineLight& light) {
  pose = se3_exp(delta.head<6>()) * pose;
  light.a += delta(6);
  light.b += delta(7);
}

namespace {

std::optional<Vec8> solve_damped(const Mat8& H, const Vec8& g, double lambda) {
  Mat8 A = H;
  if (lambda > 0) A.diagonal().array() += lambda * (H.diagonal().array() + 1e-12);
  Eigen::LLT<Mat8> llt(A);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Vec8 delta = llt.solve(-g);
  if (!delta.allFinite()) return std::nullopt;
  return delta;
}

constexpr double kMaxLambda = 1e10;

}  // namespace

TrackResult solve_level(const GrayImage& frame, const ReferenceLevel& ref, const Pose& init_pose,
                        const AffineLight& init_light, const TrackConfig& cfg) {
  TrackResult res;
  res.pose = init_pose;
  res.light = init_light;

  NormalEquations ne = linearize(frame, ref, res.pose, res.light, cfg);
  if (ne.residuals.failed()) {
    res.status = TrackStatus::no_valid_pixels;
    res.final_cost = std::numeric_limits<double>::infinity();
    res.initial_cost = res.final_cost;
    return res;
  }
  double cost = ne.residuals.cost();
  res.initial_cost = cost;
  res.cost_trace.push_back(cost);
  res.valid_ratio = ne.residuals.valid_ratio();

  double lambda = 0.0;
  bool diverged = false;
  for (int it = 0; it < cfg.max_iters; ++it) {
    // Undamped step decides convergence.
    if (const auto gn = solve_damped(ne.H, ne.g, 0.0); gn && gn->norm() < cfg.convergence_tol) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted) {
      const auto delta = solve_damped(ne.H, ne.g, lambda);
      if (delta) {
        Pose pose = res.pose;
        AffineLight light = res.light;
        apply_increment(*delta, pose, light);
        if (light.a > 0) {
          const ResidualSet trial = residuals(frame, ref, pose, light, cfg);
          if (!trial.failed() && trial.cost() <= cost) {
            res.pose = pose;
            res.light = light;
            cost = trial.cost();
            accepted = true;
            lambda = lambda > 1e-6 ? lambda * 0.1 : 0.0;
            if (delta->norm() < cfg.convergence_tol) res.converged = true;
            break;
          }
        }
      }
      lambda = lambda > 0 ? lambda * 10.0 : 1e-4;
      if (lambda > kMaxLambda) {
        diverged = true;
        break;
      }
    }
    if (diverged) break;
    res.iterations = it + 1;
    res.cost_trace.push_back(cost);
    ne = linearize(frame, ref, res.pose, res.light, cfg);
    res.valid_ratio = ne.residuals.valid_ratio();
    if (res.converged) break;
  }
  if (diverged) res.converged = false;
  res.final_cost = cost;
  return res;
}

TrackResult track(const Pyramid& frame_pyr, const TrackingReference& ref, const TrackConfig& cfg,
                  const Pose& init_pose, const AffineLight& init_light) {
  const int n = std::min({cfg.levels, frame_pyr.size(), static_cast<int>(ref.levels.size())});
  if (n < 1) throw std::invalid_argument("track: no pyramid levels available");
  Pose pose = init_pose;
  AffineLight light = init_light;
  TrackResult out;
  std::vector<double> trace;
  int iterations = 0;
  const ResidualSet at_init = residuals(frame_pyr[0].image, ref.levels[0], pose, light, cfg);
  const double initial_cost =
      at_init.failed() ? std::numeric_limits<double>::infinity() : at_init.cost();
  for (int l = n - 1; l >= 0; --l) {
    TrackResult lvl = solve_level(frame_pyr[l].image, ref.levels[l], pose, light, cfg);
    iterations += lvl.iterations;
    trace.insert(trace.end(), lvl.cost_trace.begin(), lvl.cost_trace.end());
    if (lvl.status == TrackStatus::ok) {
      pose = lvl.pose;
      light = lvl.light;
    }
    out = std::move(lvl);
  }
  out.pose = pose;
  out.light = light;
  out.iterations = iterations;
  out.cost_trace = std::move(trace);
  out.initial_cost = initial_cost;
  if (out.status == TrackStatus::ok && out.valid_ratio < cfg.min_valid_ratio)
    out.status = TrackStatus::low_valid_ratio;
  return out;
}

Pose predict_initial_pose(const PoseHistory& history, const Pose& kf_world_from_cam,
                          bool motion_model) {
  if (!history.last) return Pose::identity();
  const Pose cam_from_world_last = history.last->inverse();
  Pose cam_from_world = cam_from_world_last;
  if (motion_model && history.before_last) {
    // Last relative motion (i-2 -> i-1) applied once more.
    const Pose step = cam_from_world_last * (*history.before_last);
    cam_from_world = step * cam_from_world_last;
  }
  return cam_from_world * kf_world_from_cam;
}

TrackResult track(const Pyramid& frame_pyr, const TrackingReference& ref, const TrackConfig& cfg,
                  const PoseHistory& history, const Pose& kf_world_from_cam,
                  const AffineLight& init_light) {
  return track(frame_pyr, ref, cfg, predict_initial_pose(history, kf_world_from_cam, cfg.motion_model),
               init_light);
}

}  // namespace densevo
