#include "densevo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "densevo/depth_search.hpp"

namespace fs = std::filesystem;

namespace densevo {

Raster<float> KeyframeRecord::depth() const {
  Raster<float> out(filter.width(), filter.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(1.0 / filter[i].mu);
  return out;
}

namespace {

const char* status_name(TrackStatus s) {
  switch (s) {
    case TrackStatus::ok: return "ok";
    case TrackStatus::no_valid_pixels: return "no_valid_pixels";
    case TrackStatus::low_valid_ratio: return "low_valid_ratio";
  }
  return "?";
}

KeyframeRecord retire(Keyframe&& kf, Raster<float>&& best_ncc, int n_updates) {
  KeyframeRecord rec;
  rec.frame_index = kf.frame_index;
  rec.timestamp = kf.timestamp;
  rec.world_from_cam = kf.world_from_cam;
  rec.K = kf.pyramid[0].K;
  rec.color = std::move(kf.color);
  rec.filter = std::move(kf.filter);
  rec.raw_sem = std::move(kf.raw_sem);
  rec.sem = std::move(kf.sem);
  rec.best_ncc = std::move(best_ncc);
  rec.n_updates = n_updates;
  return rec;
}

int usable_levels(const Intrinsics& K, int requested) {
  int n = 1;
  while (n < requested && (K.width >> n) >= 8 && (K.height >> n) >= 8) ++n;
  return n;
}

}  // namespace

RunOutput run(const FrameSource& source, const PipelineConfig& cfg, std::size_t begin,
              std::size_t end) {
  cfg.validate();
  end = std::min(end, source.size());
  RunOutput out;
  if (begin >= end) return out;

  const Intrinsics& K = source.intrinsics();
  const int levels = usable_levels(K, cfg.track.levels);

  struct Active {
    Keyframe kf;
    TrackingReference ref;
    Raster<float> best_ncc;
    int n_updates = 0;
  };
  auto activate = [&](Keyframe kf) {
    Active a;
    a.ref = make_reference(kf.pyramid, kf.filter, cfg.down_weighting);
    a.best_ncc = Raster<float>(K.width, K.height, -1.0f);
    a.kf = std::move(kf);
    return a;
  };

  const SequenceFrame first = source.frame(begin);
  Active active = activate(
      insert_keyframe(first, K, Pose::identity(), cfg.filter, levels, cfg.use_outlier_mask));
  out.trajectory.push_back({first.timestamp, Pose::identity()});
  {
    FrameDiagnostics d;
    d.frame_index = first.index;
    d.keyframe_index = first.index;
    d.inserted_keyframe = true;
    d.event = "init";
    out.diagnostics.push_back(d);
  }

  PoseHistory history;
  history.push(Pose::identity());
  AffineLight light;
  int frames_since_kf = 0;

  for (std::size_t k = begin + 1; k < end; ++k) {
    const SequenceFrame frame = source.frame(k);
    const GrayImage gray = to_gray(frame.image);
    const Pyramid pyr = build_pyramid(gray, K, levels);

    FrameDiagnostics diag;
    diag.frame_index = frame.index;
    diag.keyframe_index = active.kf.frame_index;

    const Pose kf_world = active.kf.world_from_cam;
    const TrackResult tr = track(pyr, active.ref, cfg.track, history, kf_world, light);
    diag.status = tr.status;
    diag.iterations = tr.iterations;
    diag.initial_cost = tr.initial_cost;
    diag.final_cost = tr.final_cost;
    diag.valid_ratio = tr.valid_ratio;
    diag.converged = tr.converged;

    if (tr.failed()) {
      // No relocalisation: keep the predicted pose and restart from this frame.
      const Pose predicted = predict_initial_pose(history, kf_world, cfg.track.motion_model);
      const Pose world = kf_world * predicted.inverse();
      diag.relative_pose = predicted;
      out.trajectory.push_back({frame.timestamp, world});
      history.push(world);
      if (frame.priors) {
        out.keyframes.push_back(
            retire(std::move(active.kf), std::move(active.best_ncc), active.n_updates));
        active = activate(
            insert_keyframe(frame, K, world, cfg.filter, levels, cfg.use_outlier_mask));
        light = AffineLight{};
        frames_since_kf = 0;
        diag.inserted_keyframe = true;
        diag.keyframe_index = frame.index;
        diag.event = std::string("tracking_lost:") + status_name(tr.status) + ";reinserted";
      } else {
        diag.event = std::string("tracking_lost:") + status_name(tr.status) + ";no_priors";
        ++frames_since_kf;
      }
      out.diagnostics.push_back(diag);
      continue;
    }

    diag.relative_pose = tr.pose;
    light = tr.light;
    const Pose world = kf_world * tr.pose.inverse();
    out.trajectory.push_back({frame.timestamp, world});
    history.push(world);

    if (cfg.posterior_update) {
      const SearchReference sref{active.kf.pyramid[0].image, active.kf.pyramid[0].K};
      KeyframeSearch ks = search_keyframe(sref, pyr[0].image, tr.pose, tr.light, active.kf.filter,
                                          cfg.search, cfg.filter, cfg.pixel_stride);
      diag.n_measurements = static_cast<int>(ks.measurements.size());
      for (const auto& pm : ks.measurements) {
        const UpdateOutcome up = update(active.kf.filter(pm.u, pm.v), pm.m, cfg.filter);
        if (up.accepted) {
          active.kf.filter(pm.u, pm.v) = up.state;
          ++diag.n_updates;
        }
      }
      active.best_ncc = std::move(ks.best_score);
      ++active.n_updates;
      active.ref = make_reference(active.kf.pyramid, active.kf.filter, cfg.down_weighting);
    }

    ++frames_since_kf;
    if (should_insert(frames_since_kf, tr.valid_ratio, cfg.keyframe)) {
      if (!frame.priors) {
        diag.event = "keyframe_deferred:no_priors";
      } else {
        Keyframe next = insert_keyframe(frame, K, world, cfg.filter, levels, cfg.use_outlier_mask);
        next.sem = propagate_semantics(active.kf, next, tr.pose, cfg.sem_inlier_threshold);
        out.keyframes.push_back(
            retire(std::move(active.kf), std::move(active.best_ncc), active.n_updates));
        active = activate(std::move(next));
        light = AffineLight{};
        frames_since_kf = 0;
        diag.inserted_keyframe = true;
        diag.event = "keyframe";
      }
    }
    out.diagnostics.push_back(diag);
  }
  out.keyframes.push_back(retire(std::move(active.kf), std::move(active.best_ncc), active.n_updates));
  return out;
}

std::vector<RunOutput> run_snippets(const FrameSource& source, const PipelineConfig& cfg, int n) {
  if (n < 2) throw std::invalid_argument("run_snippets: N must be >= 2");
  std::vector<RunOutput> runs;
  const std::size_t N = static_cast<std::size_t>(n);
  for (std::size_t start = 0; start + N <= source.size(); start += N)
    runs.push_back(run(source, cfg, start, start + N));
  return runs;
}

Trajectory concat_trajectories(const std::vector<RunOutput>& runs) {
  Trajectory all;
  for (const auto& r : runs) all.insert(all.end(), r.trajectory.begin(), r.trajectory.end());
  return all;
}

void append_diagnostics_csv(const std::vector<FrameDiagnostics>& diags, const fs::path& path,
                            bool header) {
  std::ofstream out(path, header ? std::ios::trunc : std::ios::app);
  if (!out) throw std::runtime_error("cannot write diagnostics: " + path.string());
  if (header)
    out << "frame,keyframe,inserted_keyframe,status,iterations,initial_cost,final_cost,valid_ratio,"
           "converged,n_measurements,n_updates,event\n";
  char buf[256];
  for (const auto& d : diags) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%s,%d,%.9g,%.9g,%.6f,%d,%d,%d,", d.frame_index,
                  d.keyframe_index, d.inserted_keyframe ? 1 : 0, status_name(d.status), d.iterations,
                  d.initial_cost, d.final_cost, d.valid_ratio, d.converged ? 1 : 0, d.n_measurements,
                  d.n_updates);
    out << buf << d.event << '\n';
  }
}

void write_run_output(const std::vector<RunOutput>& runs, const PipelineConfig& cfg,
                      const fs::path& out_dir, bool debug_rasters) {
  fs::create_directories(out_dir / "keyframes");
  write_trajectory(concat_trajectories(runs), out_dir / "traj.txt");
  {
    std::ofstream c(out_dir / "config_used.txt");
    c << dump_config(cfg);
  }
  bool header = true;
  for (const auto& r : runs) {
    append_diagnostics_csv(r.diagnostics, out_dir / "tracking.csv", header);
    header = false;
    for (const auto& kf : r.keyframes) {
      const fs::path dir = out_dir / "keyframes" / ("kf_" + frame_name(kf.frame_index, ""));
      fs::create_directories(dir);
      write_f32_raster(dir / "depth.f32", kf.depth());
      write_image(dir / "color.png", kf.color);
      write_calib(kf.K, (dir / "calib.txt").string());
      {
        std::ofstream p(dir / "pose.txt");
        p << format_trajectory_line({kf.timestamp, kf.world_from_cam}) << '\n';
      }
      if (!kf.sem.empty()) {
        write_label_image(dir / "labels.png", kf.sem.argmax());
        write_label_image(dir / "raw_labels.png", kf.raw_sem.argmax());
        write_f32(dir / "sem.f32", kf.sem.data());
      }
      if (debug_rasters) {
        write_filter_state(kf.filter, dir);
        write_f32_raster(dir / "ncc.f32", kf.best_ncc);
      }
    }
  }
}

std::vector<CloudPoint> keyframe_cloud(const fs::path& kf_dir, double max_depth) {
  std::vector<fs::path> dirs;
  if (fs::exists(kf_dir / "depth.f32")) {
    dirs.push_back(kf_dir);
  } else {
    if (!fs::is_directory(kf_dir)) throw std::runtime_error("not a directory: " + kf_dir.string());
    for (const auto& e : fs::directory_iterator(kf_dir))
      if (e.is_directory() && fs::exists(e.path() / "depth.f32")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
  }
  std::vector<CloudPoint> cloud;
  for (const auto& dir : dirs) {
    const Intrinsics K = read_calib((dir / "calib.txt").string());
    const Trajectory pose = read_trajectory(dir / "pose.txt");
    if (pose.size() != 1) throw std::runtime_error((dir / "pose.txt").string() + ": expected one pose");
    const Raster<float> depth = read_f32_raster(dir / "depth.f32", K.width, K.height);
    const RgbImage color = read_image(dir / "color.png");
    std::optional<LabelImage> labels;
    if (fs::exists(dir / "labels.png")) labels = read_label_image(dir / "labels.png");
    for (int v = 0; v < K.height; ++v)
      for (int u = 0; u < K.width; ++u) {
        const double z = depth(u, v);
        if (!std::isfinite(z) || !(z > 0) || (max_depth > 0 && z > max_depth)) continue;
        CloudPoint p;
        p.xyz = pose[0].pose * back_project({double(u), double(v)}, z, K);
        p.rgb = color(u, v);
        if (labels) p.label = (*labels)(u, v);
        cloud.push_back(p);
      }
  }
  return cloud;
}

}  // namespace densevo
