// Acceptance gate: one PASS/FAIL line per criterion. Usage: acceptance [path/to/densevo]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>

#include "densevo/config.hpp"
#include "densevo/depth_filter.hpp"
#include "densevo/depth_search.hpp"
#include "densevo/eval.hpp"
#include "densevo/pipeline.hpp"
#include "densevo/pyramid.hpp"
#include "densevo/synth.hpp"
#include "densevo/tracker.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace densevo;
namespace fs = std::filesystem;
namespace oc = densevo::oracle;
using densevo::testing::random_pose;
using densevo::testing::random_vec;
using densevo::testing::render_plane;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// 1. Posterior update against the exact two-hypothesis moments.
Verdict posterior_oracle() {
  const FilterParams p;
  std::mt19937_64 rng(42);
  double worst = 0;
  int rejected = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto c = oc::random_case(rng, p);
    const UpdateOutcome out = update(c.state, c.m, p);
    if (!out.accepted) {
      ++rejected;
      continue;
    }
    const oc::Moments ex = oc::exact(c.state, c.m, p);
    double a, b;
    oc::matched_beta(ex, a, b);
    worst = std::max({worst, oc::rel_err(out.state.mu, ex.mean_d),
                      oc::rel_err(out.state.sigma * out.state.sigma, ex.var_d),
                      oc::rel_err(out.state.alpha, a), oc::rel_err(out.state.beta, b)});
  }
  double worst_num = 0;
  for (int i = 0; i < 10; ++i) {
    const auto c = oc::random_case(rng, p, 1.5);
    const oc::Moments ex = oc::exact(c.state, c.m, p);
    const oc::Moments num = oc::integrate(c.state, c.m, p, 2000);
    worst_num = std::max({worst_num, oc::rel_err(num.mean_d, ex.mean_d), oc::rel_err(num.var_d, ex.var_d),
                          oc::rel_err(num.mean_rho, ex.mean_rho),
                          oc::rel_err(num.second_rho, ex.second_rho)});
  }
  return {worst < 1e-6 && worst_num < 1e-3 && rejected == 0,
          fmt("max rel err %.2e (tol 1e-6), integration %.2e (tol 1e-3), rejected %d", worst, worst_num,
              rejected)};
}

// 2. Tracker data-term Jacobian against central differences.
Verdict jacobian_check() {
  const auto seq = render_plane(4, 21);
  PriorBundle pr;
  pr.depth = seq.frames[0].depth;
  const TrackingReference ref =
      make_reference(build_pyramid(seq.frames[0].intensity, seq.K, 1), init_state(pr, FilterParams{}), true);
  const ReferenceLevel& lvl = ref.levels[0];
  const GrayImage& frame = seq.frames[2].intensity;
  const Pose gt = seq.frames[2].world_from_cam.inverse() * seq.frames[0].world_from_cam;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> uu(0, seq.K.width - 1), vv(0, seq.K.height - 1);
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
      const double margin = 2e-3;  // keep the stencil inside one bilinear cell
      if (std::floor(c.pixel.u - margin) != std::floor(c.pixel.u + margin) ||
          std::floor(c.pixel.v - margin) != std::floor(c.pixel.v + margin))
        continue;
      Row8 fd;
      bool ok = true;
      for (int i = 0; i < 8 && ok; ++i) {
        Vec8 e = Vec8::Zero();
        e(i) = h;
        Pose pp = pose, pm = pose;
        AffineLight lp = light, lm = light;
        apply_increment(e, pp, lp);
        apply_increment(-e, pm, lm);
        const auto rp = residual_jacobian(frame, lvl, u, v, pp, lp);
        const auto rm = residual_jacobian(frame, lvl, u, v, pm, lm);
        ok = rp && rm;
        if (ok) fd(i) = (rp->r - rm->r) / (2 * h);
      }
      if (!ok) continue;
      worst = std::max(worst, (fd - rj->J).norm() / rj->J.norm());
      ++checked;
    }
  }
  return {worst < 1e-4 && checked >= 200,
          fmt("max rel err %.2e over %d residuals, 50 states (tol 1e-4)", worst, checked)};
}

// 3. Group, projection and alignment round trips.
Verdict round_trips() {
  std::mt19937_64 rng(3);
  double se3_err = 0;
  for (int i = 0; i < 1000; ++i) {
    Twist xi;
    xi << random_vec(rng, 1.0), random_vec(rng, 2.0);
    se3_err = std::max(se3_err, (se3_log(se3_exp(xi)) - xi).norm());
    const Pose T = random_pose(rng);
    se3_err = std::max(se3_err, (se3_exp(se3_log(T)).matrix() - T.matrix()).norm());
  }
  const Intrinsics K = synth::default_intrinsics();
  std::uniform_real_distribution<double> uu(0, K.width - 1), vv(0, K.height - 1), dd(0.2, 50);
  double proj_err = 0;
  for (int i = 0; i < 1000; ++i) {
    const PixelCoord p{uu(rng), vv(rng)};
    const double d = dd(rng);
    const Vec3 x = back_project(p, d, K);
    const Projection q = project(p, d, Pose::identity(), K);
    proj_err = std::max({proj_err, std::hypot(q.pixel.u - p.u, q.pixel.v - p.v), std::abs(x.z() - d)});
  }
  double align_err = 0;
  for (int i = 0; i < 20; ++i) {
    Trajectory gt, est;
    const Pose T = random_pose(rng, 3.0, 5.0);
    const double s = std::exp(std::uniform_real_distribution<double>(-1, 1)(rng));
    for (int k = 0; k < 15; ++k) {
      const Pose P = random_pose(rng, 3.0, 3.0);
      gt.push_back({0.1 * k, P});
      est.push_back({0.1 * k, Pose(T.rotation() * P.rotation(), s * (T * P.translation()))});
    }
    align_err = std::max(align_err, ate_rmse(est, gt, AlignMode::sim3));
    Trajectory rigid = est;
    for (auto& e : rigid) e.pose = Pose(e.pose.rotation(), e.pose.translation() / s);
    align_err = std::max(align_err, ate_rmse(rigid, gt, AlignMode::se3));
  }
  return {se3_err < 1e-9 && proj_err < 1e-6 && align_err < 1e-9,
          fmt("se3 %.2e (tol 1e-9), projection %.2e (tol 1e-6), procrustes %.2e (tol 1e-9)", se3_err,
              proj_err, align_err)};
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

// Median |1/mu - d_gt| / d_gt over the keyframe.
double depth_error(const KeyframeRecord& kf, const Raster<float>& gt) {
  std::vector<double> e;
  const Raster<float> d = kf.depth();
  for (std::size_t i = 0; i < d.size(); ++i) e.push_back(std::abs(d[i] - gt[i]) / gt[i]);
  return median(e);
}

// 4. End-to-end odometry and depth convergence on the textured plane.
Verdict plane_odometry() {
  const auto seq = render_plane(30, 4);
  const PipelineConfig cfg;
  const RunOutput out = run(synth::to_frame_source(seq), cfg);
  const Trajectory gt = seq.ground_truth();
  const double ate = ate_rmse(out.trajectory, gt, AlignMode::sim3);
  const double len = trajectory_length(gt);

  // First keyframe after 10 tracked frames, from exact priors and from
  // depth priors corrupted by 20% log-normal noise.
  PipelineConfig long_kf = cfg;
  long_kf.keyframe.max_frames = 11;
  auto first11 = [&](const synth::RenderedSequence& s) {
    std::vector<SequenceFrame> frames;
    const auto src = synth::to_frame_source(s);
    for (std::size_t k = 0; k < 11; ++k) frames.push_back(src.frame(k));
    return InMemorySequence(s.K, frames, s.class_names);
  };
  const RunOutput exact = run(first11(seq), long_kf);
  const double err_exact = depth_error(exact.keyframes.front(), seq.frames[0].depth);

  synth::SceneDesc noisy;
  noisy.seed = 4;
  noisy.noise.depth_sigma = 0.2;
  const auto nseq = synth::render(noisy, synth::default_intrinsics(), 11);
  std::vector<double> e0;
  for (std::size_t i = 0; i < nseq.priors[0].depth.size(); ++i)
    e0.push_back(std::abs(nseq.priors[0].depth[i] - nseq.frames[0].depth[i]) / nseq.frames[0].depth[i]);
  const RunOutput conv = run(first11(nseq), long_kf);
  const double err_noisy = depth_error(conv.keyframes.front(), nseq.frames[0].depth);

  const int n_updates = exact.keyframes.front().n_updates;
  return {ate < 0.01 * len && err_exact < 0.05 && n_updates == 10,
          fmt("ATE %.4f m vs 1%% of %.3f m; depth err %.4f after %d updates (tol 0.05); "
              "not gated: 20%% depth-prior noise %.4f -> %.4f",
              ate, len, err_exact, n_updates, median(e0), err_noisy)};
}

PipelineConfig ablation(bool mask, bool update, bool weighting) {
  PipelineConfig c;
  c.use_outlier_mask = mask;
  c.posterior_update = update;
  c.down_weighting = weighting;
  return c;
}

synth::SceneDesc occluder_scene(std::uint64_t seed) {
  synth::SceneDesc s;
  s.kind = synth::SceneKind::occluder;
  s.seed = seed;
  s.noise = {0.1, 0.2, 0.2};
  return s;
}

// 5. Snippet ATE ordering under an injected occluder.
Verdict ablation_ordering() {
  const int n_seeds = 10, n_frames = 30, snippet = 5;
  int full_wins = 0, md_wins = 0, full_se3 = 0, md_se3 = 0;
  std::string per_seed;
  for (int s = 0; s < n_seeds; ++s) {
    const auto seq = synth::render(occluder_scene(100 + s), synth::default_intrinsics(), n_frames);
    const auto src = synth::to_frame_source(seq);
    const Trajectory gt = seq.ground_truth();
    auto ate = [&](const PipelineConfig& c) {
      const Trajectory est = concat_trajectories(run_snippets(src, c, snippet));
      return std::pair{snippet_ate(est, gt, snippet, AlignMode::sim3).mean,
                       snippet_ate(est, gt, snippet, AlignMode::se3).mean};
    };
    const auto none = ate(ablation(false, false, false));
    const auto md = ate(ablation(true, false, true));
    const auto full = ate(ablation(true, true, true));
    full_wins += full.first < none.first;
    md_wins += md.first < none.first;
    full_se3 += full.second < none.second;
    md_se3 += md.second < none.second;
    per_seed += fmt(" [%.4f %.4f %.4f]", none.first, md.first, full.first);
  }
  return {full_wins >= 8 && md_wins >= 8,
          fmt("sim3 Full<None %d/10, OM+DW<None %d/10 (need 8); se3 %d/10, %d/10 (not gated); "
              "sim3 none/om+dw/full:",
              full_wins, md_wins, full_se3, md_se3) +
              per_seed};
}

LabelImage argmax_labels(const SemanticRaster& s) { return s.argmax(); }

// 6. Fused keyframe semantics against raw predictions.
Verdict semantic_fusion() {
  int wins = 0;
  std::string per_seed;
  for (int s = 0; s < 10; ++s) {
    synth::SceneDesc desc;
    desc.seed = 200 + s;
    desc.noise.sem_noise = 0.3;
    const auto seq = synth::render(desc, synth::default_intrinsics(), 60);
    PipelineConfig cfg;
    cfg.pixel_stride = 2;
    const RunOutput out = run(synth::to_frame_source(seq), cfg);
    double raw = 0, fused = 0;
    for (const auto& kf : out.keyframes) {
      const LabelImage& gt = seq.frames[kf.frame_index].labels;
      raw += miou(argmax_labels(kf.raw_sem), gt, desc.n_classes);
      fused += miou(argmax_labels(kf.sem), gt, desc.n_classes);
    }
    raw /= out.keyframes.size();
    fused /= out.keyframes.size();
    wins += fused >= raw;
    per_seed += fmt(" [%.3f %.3f]", raw, fused);
  }
  return {wins >= 8, fmt("fused>=raw %d/10 (need 8); raw/fused:", wins) + per_seed};
}

// 7. NCC grid search on translating and rotating pairs.
Verdict ncc_search() {
  const FilterParams params;
  const SearchConfig cfg;
  const auto seq = render_plane(2, 31, {0.1, 0.0, 0.0}, Vec3::Zero());
  const Pose pose = seq.frames[1].world_from_cam.inverse() * seq.frames[0].world_from_cam;
  const auto& kf = seq.frames[0];
  const SearchReference ref{kf.intensity, seq.K};
  const int r = cfg.patch_radius;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> jitter(-0.08, 0.08);
  int textured = 0, hits = 0;
  for (int v = r; v < seq.K.height - r; ++v)
    for (int u = r; u < seq.K.width - r; ++u) {
      double s = 0, ss = 0;
      bool visible = true;
      for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du) {
          const double x = kf.intensity(u + du, v + dv);
          s += x;
          ss += x * x;
          visible = visible && project({double(u + du), double(v + dv)}, kf.depth(u, v), pose, seq.K).valid();
        }
      const double n = (2 * r + 1) * (2 * r + 1);
      if (ss / n - (s / n) * (s / n) < 1e-4 || !visible) continue;
      const double gt = 1.0 / kf.depth(u, v);
      const PixelState st = init_pixel(1.0 / (gt * (1.0 + jitter(rng))), 0.9, params);
      const auto grid = depth_grid(st, cfg, params);
      std::size_t nearest = 0;
      for (std::size_t i = 1; i < grid.size(); ++i)
        if (std::abs(grid[i] - gt) < std::abs(grid[nearest] - gt)) nearest = i;
      const SearchResult res = search_pixel(ref, seq.frames[1].intensity, pose, {}, u, v, st, cfg, params);
      ++textured;
      hits += res.measurement && res.measurement->d == grid[nearest];
    }
  const double rate = double(hits) / textured;

  const auto rot = render_plane(2, 34, Vec3::Zero(), {0.0, 0.02, 0.0});
  PriorBundle p;
  p.depth = rot.frames[0].depth;
  const KeyframeSearch ks = search_keyframe({rot.frames[0].intensity, rot.K}, rot.frames[1].intensity,
                                            rot.frames[1].world_from_cam.inverse(), {},
                                            init_state(p, params), cfg, params);
  return {rate > 0.9 && ks.measurements.empty(),
          fmt("nearest-candidate rate %.4f over %d textured px (need > 0.9); rotation measurements %zu",
              rate, textured, ks.measurements.size())};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// 8. Two CLI runs with identical inputs byte-compare.
Verdict determinism(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "CLI binary not found: '" + cli + "'"};
  const fs::path dir = fs::temp_directory_path() / "densevo_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  synth::SceneDesc desc;
  desc.kind = synth::SceneKind::occluder;
  desc.seed = 7;
  desc.noise = {0.1, 0.2, 0.2};
  synth::write_sequence(synth::render(desc, synth::default_intrinsics(), 12), dir / "seq");
  std::ofstream(dir / "run.cfg") << "pixel_stride = 2\n";
  for (const char* run : {"a", "b"}) {
    const std::string cmd = "\"" + cli + "\" run --seq \"" + (dir / "seq").string() + "\" --config \"" +
                            (dir / "run.cfg").string() + "\" --out \"" + (dir / run).string() +
                            "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
  }
  const std::string a = slurp(dir / "a" / "traj.txt"), b = slurp(dir / "b" / "traj.txt");
  const bool same = !a.empty() && a == b;
  fs::remove_all(dir);
  return {same, fmt("traj.txt %zu bytes, identical: %s", a.size(), same ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"posterior oracle", posterior_oracle},
      {"tracker jacobian", jacobian_check},
      {"geometric round trips", round_trips},
      {"plane odometry", plane_odometry},
      {"ablation ordering", ablation_ordering},
      {"semantic fusion", semantic_fusion},
      {"ncc depth search", ncc_search},
      {"determinism", [&] { return determinism(cli); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %zu %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
