#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "densevo/depth_filter.hpp"
#include "densevo/pyramid.hpp"
#include "densevo/synth.hpp"
#include "densevo/tracker.hpp"
#include "test_util.hpp"

using namespace densevo;
using densevo::testing::random_vec;

namespace {

struct Scene {
  synth::RenderedSequence seq;
  Intrinsics K;
};

Pose relative_gt(const synth::RenderedSequence& seq, int kf, int fr) {
  return seq.frames[fr].world_from_cam.inverse() * seq.frames[kf].world_from_cam;
}

// Reference from ground-truth depth; mask (when given) feeds W(p).
TrackingReference gt_reference(const synth::RenderedSequence& seq, int kf, int levels,
                               bool use_mask = false, bool quantised = false) {
  const auto& f = seq.frames[kf];
  PriorBundle p;
  p.depth = f.depth;
  if (use_mask) p.mask = f.mask;
  const GrayImage img = quantised ? to_gray(f.image) : f.intensity;
  return make_reference(build_pyramid(img, seq.K, levels), init_state(p, FilterParams{}), true);
}

Pyramid frame_pyramid(const synth::RenderedSequence& seq, int k, int levels, bool quantised = false) {
  const auto& f = seq.frames[k];
  return build_pyramid(quantised ? to_gray(f.image) : f.intensity, seq.K, levels);
}

double rot_err(const Pose& a, const Pose& b) { return so3_log(a.rotation().transpose() * b.rotation()).norm(); }
double trans_err(const Pose& a, const Pose& b) { return (a.translation() - b.translation()).norm(); }

ReferenceLevel flat_reference(const GrayImage& img, float inv_depth = 0.5f) {
  const Intrinsics K{100.0, 100.0, (img.width() - 1) / 2.0, (img.height() - 1) / 2.0, img.width(),
                     img.height()};
  return {img, K, Raster<float>(img.width(), img.height(), inv_depth),
          Raster<float>(img.width(), img.height(), 1.0f)};
}

GrayImage smooth_image(int w, int h) {
  GrayImage img(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      img(u, v) = static_cast<float>(0.5 + 0.2 * std::sin(0.21 * u) * std::cos(0.17 * v) + 0.1 * std::sin(0.05 * (u + v)));
  return img;
}

TEST(Huber, Values) {
  EXPECT_DOUBLE_EQ(huber(0.05, 0.1), 0.5 * 0.05 * 0.05);
  EXPECT_DOUBLE_EQ(huber(-0.3, 0.1), 0.1 * (0.3 - 0.05));
  EXPECT_DOUBLE_EQ(huber_weight(0.05, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(huber_weight(-0.4, 0.1), 0.25);
  // Continuous at the threshold.
  EXPECT_NEAR(huber(0.1 + 1e-12, 0.1), huber(0.1 - 1e-12, 0.1), 1e-12);
}

TEST(Residuals, IdenticalFramesAreZero) {
  const GrayImage img = smooth_image(64, 48);
  const ReferenceLevel ref = flat_reference(img);
  const TrackConfig cfg;
  const ResidualSet rs = residuals(img, ref, Pose::identity(), {}, cfg);
  EXPECT_EQ(rs.n_valid, 64 * 48);
  EXPECT_LT(rs.cost(), 1e-24);
  for (const auto& px : rs.pixels) ASSERT_NEAR(px.r, 0.0, 1e-12);
}

TEST(Residuals, AffineLightIsAbsorbed) {
  const GrayImage img = smooth_image(64, 48);
  GrayImage lit(64, 48);
  for (std::size_t i = 0; i < img.size(); ++i) lit[i] = static_cast<float>(0.8 * img[i] + 0.1);
  const ReferenceLevel ref = flat_reference(img);
  const TrackConfig cfg;
  const ResidualSet rs = residuals(lit, ref, Pose::identity(), {0.8, 0.1}, cfg);
  for (const auto& px : rs.pixels) EXPECT_NEAR(px.r, 0.0, 1e-7);
  EXPECT_LT(rs.data_cost, 1e-13);
  EXPECT_NEAR(rs.reg_cost, cfg.affine_weight * (0.04 + 0.01), 1e-15);
}

TEST(Residuals, AllOutOfBoundsFails) {
  const GrayImage img = smooth_image(64, 48);
  const ReferenceLevel ref = flat_reference(img);
  const ResidualSet rs = residuals(img, ref, Pose(Mat3::Identity(), Vec3(50, 0, 0)), {}, TrackConfig{});
  EXPECT_TRUE(rs.failed());
  EXPECT_EQ(rs.n_total, 64 * 48);
  const TrackResult tr = solve_level(img, ref, Pose(Mat3::Identity(), Vec3(50, 0, 0)), {}, TrackConfig{});
  EXPECT_EQ(tr.status, TrackStatus::no_valid_pixels);
}

TEST(Residuals, InvalidDepthOutsideDomain) {
  const GrayImage img = smooth_image(32, 16);
  ReferenceLevel ref = flat_reference(img);
  for (int u = 0; u < 32; ++u) ref.inv_depth(u, 0) = 0.0f;
  const ResidualSet rs = residuals(img, ref, Pose::identity(), {}, TrackConfig{});
  EXPECT_EQ(rs.n_total, 32 * 15);
}

TEST(Jacobian, MatchesCentralDifferences) {
  const auto seq = densevo::testing::render_plane(4, 21);
  const TrackingReference ref = gt_reference(seq, 0, 1);
  const ReferenceLevel& lvl = ref.levels[0];
  const GrayImage& frame = seq.frames[2].intensity;
  const Pose gt = relative_gt(seq, 0, 2);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> uu(0, 415), vv(0, 127);
  std::uniform_real_distribution<double> ua(0.8, 1.2), ub(-0.1, 0.1);
  const double h = 1e-6;
  double worst = 0;
  int checked = 0;
  for (int state = 0; state < 50; ++state) {
    const Pose pose = Pose(so3_exp(random_vec(rng, 0.01)), random_vec(rng, 0.02)) * gt;
    const AffineLight light{ua(rng), ub(rng)};
    for (int n = 0; n < 20; ++n) {
      const int u = uu(rng), v = vv(rng);
      const auto rj = residual_jacobian(frame, lvl, u, v, pose, light);
      if (!rj) continue;
      const Projection c = project({double(u), double(v)}, 1.0 / lvl.inv_depth(u, v), pose, lvl.K);
      // Central differences need the warp to stay in one bilinear cell.
      const double margin = 2e-3;
      if (std::floor(c.pixel.u - margin) != std::floor(c.pixel.u + margin) ||
          std::floor(c.pixel.v - margin) != std::floor(c.pixel.v + margin))
        continue;
      Row8 fd;
      for (int i = 0; i < 8; ++i) {
        Vec8 e = Vec8::Zero();
        e(i) = h;
        Pose pp = pose, pm = pose;
        AffineLight lp = light, lm = light;
        apply_increment(e, pp, lp);
        apply_increment(-e, pm, lm);
        const auto rp = residual_jacobian(frame, lvl, u, v, pp, lp);
        const auto rm = residual_jacobian(frame, lvl, u, v, pm, lm);
        ASSERT_TRUE(rp && rm);
        fd(i) = (rp->r - rm->r) / (2 * h);
      }
      const double rel = (fd - rj->J).norm() / rj->J.norm();
      worst = std::max(worst, rel);
      ++checked;
    }
  }
  EXPECT_GT(checked, 500);
  EXPECT_LT(worst, 1e-4);
}

TEST(Linearize, MatchesWeightedLeastSquares) {
  const auto seq = densevo::testing::render_plane(3, 22);
  TrackingReference ref = gt_reference(seq, 0, 1);
  ReferenceLevel& lvl = ref.levels[0];
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> uw(0.0f, 1.0f);
  for (auto& w : lvl.weight.storage()) w = uw(rng);
  TrackConfig cfg;
  cfg.huber_delta = 1e9;  // quadratic everywhere
  const Pose pose = Pose(so3_exp(Vec3(0.002, -0.001, 0.0)), Vec3(0.01, 0.0, -0.01)) * relative_gt(seq, 0, 1);
  const AffineLight light{1.05, -0.02};
  const NormalEquations ne = linearize(seq.frames[1].intensity, lvl, pose, light, cfg);

  Mat8 H = Mat8::Zero();
  Vec8 g = Vec8::Zero();
  int n = 0;
  for (int v = 0; v < lvl.image.height(); ++v)
    for (int u = 0; u < lvl.image.width(); ++u) {
      const auto rj = residual_jacobian(seq.frames[1].intensity, lvl, u, v, pose, light);
      if (!rj) continue;
      H += lvl.weight(u, v) * rj->J.transpose() * rj->J;
      g += lvl.weight(u, v) * rj->r * rj->J.transpose();
      ++n;
    }
  H /= n;
  g /= n;
  H(6, 6) += 2 * cfg.affine_weight;
  H(7, 7) += 2 * cfg.affine_weight;
  g(6) += 2 * cfg.affine_weight * (light.a - 1);
  g(7) += 2 * cfg.affine_weight * light.b;
  EXPECT_EQ(ne.residuals.n_valid, n);
  EXPECT_LT((ne.H - H).norm() / H.norm(), 1e-12);
  EXPECT_LT((ne.g - g).norm() / g.norm(), 1e-12);
}

TEST(SolveLevel, MatchesGaussNewtonReferenceOnSubset) {
  const auto seq = densevo::testing::render_plane(3, 23);
  TrackingReference full = gt_reference(seq, 0, 1);
  ReferenceLevel lvl = full.levels[0];
  // Keep 100 interior pixels.
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> uu(40, 375), vv(20, 107);
  Raster<float> keep(lvl.image.width(), lvl.image.height(), 0.0f);
  for (int n = 0; n < 100;) {
    const int u = uu(rng), v = vv(rng);
    if (keep(u, v) > 0) continue;
    keep(u, v) = lvl.inv_depth(u, v);
    ++n;
  }
  lvl.inv_depth = keep;
  for (auto& w : lvl.weight.storage()) w = 1.0f;
  TrackConfig cfg;
  cfg.huber_delta = 1e9;
  cfg.max_iters = 100;
  cfg.convergence_tol = 1e-12;
  const GrayImage& frame = seq.frames[1].intensity;
  const Pose init = Pose(so3_exp(Vec3(0.001, 0.001, -0.001)), Vec3(0.005, -0.005, 0.003)) * relative_gt(seq, 0, 1);

  Pose pose = init;
  AffineLight light;
  for (int it = 0; it < 50; ++it) {
    Mat8 H = Mat8::Zero();
    Vec8 g = Vec8::Zero();
    int n = 0;
    for (int v = 0; v < lvl.image.height(); ++v)
      for (int u = 0; u < lvl.image.width(); ++u) {
        if (!(lvl.inv_depth(u, v) > 0)) continue;
        const auto rj = residual_jacobian(frame, lvl, u, v, pose, light);
        ASSERT_TRUE(rj);
        H += rj->J.transpose() * rj->J;
        g += rj->r * rj->J.transpose();
        ++n;
      }
    H /= n;
    g /= n;
    H(6, 6) += 2 * cfg.affine_weight;
    H(7, 7) += 2 * cfg.affine_weight;
    g(6) += 2 * cfg.affine_weight * (light.a - 1);
    g(7) += 2 * cfg.affine_weight * light.b;
    const Vec8 delta = H.ldlt().solve(-g);
    apply_increment(delta, pose, light);
  }
  const TrackResult tr = solve_level(frame, lvl, init, {}, cfg);
  ASSERT_EQ(tr.status, TrackStatus::ok);
  EXPECT_LT(se3_log(tr.pose * pose.inverse()).norm(), 1e-6);
  EXPECT_NEAR(tr.light.a, light.a, 1e-6);
  EXPECT_NEAR(tr.light.b, light.b, 1e-6);
}

TEST(SolveLevel, FixedPointAtGroundTruth) {
  const auto seq = densevo::testing::render_plane(3, 24);
  const TrackingReference ref = gt_reference(seq, 0, 1);
  const Pose gt = relative_gt(seq, 0, 1);
  const TrackResult tr = solve_level(seq.frames[1].intensity, ref.levels[0], gt, {}, TrackConfig{});
  EXPECT_LE(tr.iterations, 1);
  EXPECT_LT(rot_err(tr.pose, gt), 1e-5);
  EXPECT_LT(trans_err(tr.pose, gt), 1e-5);
}

TEST(SolveLevel, AcceptedStepsNeverIncreaseCost) {
  const auto seq = densevo::testing::render_plane(4, 25);
  const TrackingReference ref = gt_reference(seq, 0, 3);
  for (int l = 2; l >= 0; --l) {
    const Pyramid pyr = frame_pyramid(seq, 3, 3);
    const TrackResult tr = solve_level(pyr[l].image, ref.levels[l], Pose::identity(), {}, TrackConfig{});
    for (std::size_t i = 1; i < tr.cost_trace.size(); ++i)
      EXPECT_LE(tr.cost_trace[i], tr.cost_trace[i - 1]) << "level " << l << " step " << i;
  }
}

TEST(Track, SidewaysMotionFromIdentity) {
  const auto seq = densevo::testing::render_plane(2, 26, {0.1, 0.0, 0.0}, {0.0, 0.0, 0.0});
  const TrackingReference ref = gt_reference(seq, 0, 4, false, true);
  const Pose gt = relative_gt(seq, 0, 1);
  const TrackResult tr = track(frame_pyramid(seq, 1, 4, true), ref, TrackConfig{}, Pose::identity());
  ASSERT_EQ(tr.status, TrackStatus::ok);
  EXPECT_LT(trans_err(tr.pose, gt), 1e-3);
  EXPECT_LT(rot_err(tr.pose, gt), 1e-3);
}

TEST(Track, StaticFramesStayAtIdentity) {
  const auto seq = densevo::testing::render_plane(1, 27);
  const TrackingReference ref = gt_reference(seq, 0, 4, false, true);
  const TrackResult tr = track(frame_pyramid(seq, 0, 4, true), ref, TrackConfig{}, Pose::identity());
  EXPECT_LT(se3_log(tr.pose).norm(), 1e-4);
  EXPECT_NEAR(tr.light.a, 1.0, 1e-4);
}

TEST(Track, MotionModelStartsCloser) {
  const auto seq = densevo::testing::render_plane(4, 28);
  const TrackingReference ref = gt_reference(seq, 0, 4, false, true);
  PoseHistory history;
  history.push(seq.frames[1].world_from_cam);
  history.push(seq.frames[2].world_from_cam);
  TrackConfig cfg;
  const Pyramid pyr = frame_pyramid(seq, 3, 4, true);
  const TrackResult with_mm = track(pyr, ref, cfg, history, Pose::identity());
  cfg.motion_model = false;
  const TrackResult from_identity = track(pyr, ref, cfg, Pose::identity());
  EXPECT_LE(with_mm.final_cost, from_identity.initial_cost);
  const Pose gt = relative_gt(seq, 0, 3);
  EXPECT_LT(trans_err(with_mm.pose, gt), 1e-3);
}

TEST(Track, GaugeConsistency) {
  const auto seq = densevo::testing::render_plane(3, 29);
  const TrackConfig cfg;
  const TrackResult fwd = track(frame_pyramid(seq, 2, 4, true), gt_reference(seq, 0, 4, false, true), cfg,
                                Pose::identity());
  const TrackResult bwd = track(frame_pyramid(seq, 0, 4, true), gt_reference(seq, 2, 4, false, true), cfg,
                                Pose::identity());
  EXPECT_LT(se3_log(fwd.pose * bwd.pose).norm(), 5e-3);
}

TEST(Track, MaskWeightingHelpsWithOccluder) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    synth::SceneDesc desc;
    desc.kind = synth::SceneKind::occluder;
    desc.seed = seed;
    const auto seq = synth::render(desc, synth::default_intrinsics(), 4);
    const Pose gt = relative_gt(seq, 0, 3);
    const Pyramid pyr = frame_pyramid(seq, 3, 4, true);
    const TrackResult masked = track(pyr, gt_reference(seq, 0, 4, true, true), TrackConfig{}, Pose::identity());
    const TrackResult plain = track(pyr, gt_reference(seq, 0, 4, false, true), TrackConfig{}, Pose::identity());
    const double em = trans_err(masked.pose, gt) + rot_err(masked.pose, gt);
    const double ep = trans_err(plain.pose, gt) + rot_err(plain.pose, gt);
    if (em < ep) ++wins;
  }
  EXPECT_GE(wins, 8);
}

TEST(PredictPose, Rules) {
  PoseHistory h;
  const Pose kf(so3_exp(Vec3(0, 0.1, 0)), Vec3(1, 0, 0));
  EXPECT_LT(se3_log(predict_initial_pose(h, kf, true)).norm(), 1e-15);
  const Pose p1(so3_exp(Vec3(0, 0.11, 0)), Vec3(1.1, 0, 0.05));
  h.push(p1);
  EXPECT_LT(se3_log(predict_initial_pose(h, kf, true) * (p1.inverse() * kf).inverse()).norm(), 1e-12);
  const Pose step(so3_exp(Vec3(0, 0.01, 0)), Vec3(0.1, 0, 0.05));
  const Pose p2 = p1 * step;
  h.push(p2);
  const Pose expected = (p2 * step).inverse() * kf;
  EXPECT_LT(se3_log(predict_initial_pose(h, kf, true) * expected.inverse()).norm(), 1e-12);
  EXPECT_LT(se3_log(predict_initial_pose(h, kf, false) * (p2.inverse() * kf).inverse()).norm(), 1e-12);
}

TEST(TrackConfig, Validation) {
  TrackConfig c;
  EXPECT_NO_THROW(c.validate());
  c.min_valid_ratio = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.levels = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Reference, CoarseLevelsAverageValidChildren) {
  const Intrinsics K{100, 100, 15.5, 7.5, 32, 16};
  const Pyramid pyr = build_pyramid(GrayImage(32, 16, 0.5f), K, 2);
  FilterState st(32, 16, PixelState{9, 1, 0.5, 0.1});
  st(0, 0).mu = 0.0;  // invalid
  st(1, 0).mu = 1.0;
  const TrackingReference ref = make_reference(pyr, st, true);
  EXPECT_NEAR(ref.levels[1].inv_depth(0, 0), (1.0 + 0.5 + 0.5) / 3.0, 1e-6);
  EXPECT_NEAR(ref.levels[0].weight(5, 5), 0.9, 1e-6);
  EXPECT_EQ(make_reference(pyr, st, false).levels[0].weight(5, 5), 1.0f);
}

}  // namespace
