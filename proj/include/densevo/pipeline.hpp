#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "densevo/config.hpp"
#include "densevo/dataset_io.hpp"
#include "densevo/keyframe.hpp"
#include "densevo/tracker.hpp"

namespace densevo {

struct FrameDiagnostics {
  int frame_index = 0;
  int keyframe_index = 0;     // frame index of the keyframe tracked against
  Pose relative_pose;         // keyframe -> frame, as used for the output pose
  bool inserted_keyframe = false;
  TrackStatus status = TrackStatus::ok;
  int iterations = 0;
  double initial_cost = 0;
  double final_cost = 0;
  double valid_ratio = 1;
  bool converged = true;
  int n_measurements = 0;
  int n_updates = 0;
  std::string event;
};

// A keyframe as retired by the pipeline.
struct KeyframeRecord {
  int frame_index = 0;
  double timestamp = 0;
  Pose world_from_cam;
  Intrinsics K;
  RgbImage color;
  FilterState filter;
  SemanticRaster raw_sem;
  SemanticRaster sem;
  Raster<float> best_ncc;  // from the last depth search, -1 where unset
  int n_updates = 0;       // frames that fed the posterior update

  Raster<float> depth() const;  // 1 / mu
};

struct RunOutput {
  Trajectory trajectory;
  std::vector<KeyframeRecord> keyframes;
  std::vector<FrameDiagnostics> diagnostics;
};

// Algorithm loop over frames [begin, end) of the source: the first frame
// becomes the keyframe; every later frame is tracked, feeds the depth search
// and posterior update, and may trigger a new keyframe with semantic fusion.
RunOutput run(const FrameSource& source, const PipelineConfig& cfg, std::size_t begin = 0,
              std::size_t end = static_cast<std::size_t>(-1));

// Consecutive N-frame windows, each run from a fresh state; a trailing
// partial window is dropped.
std::vector<RunOutput> run_snippets(const FrameSource& source, const PipelineConfig& cfg, int n);

// Concatenation of snippet trajectories in frame order.
Trajectory concat_trajectories(const std::vector<RunOutput>& runs);

// Writes traj.txt, tracking.csv, config_used.txt and keyframes/kf_%06d/.
void write_run_output(const std::vector<RunOutput>& runs, const PipelineConfig& cfg,
                      const std::filesystem::path& out_dir, bool debug_rasters);

void append_diagnostics_csv(const std::vector<FrameDiagnostics>& diags,
                            const std::filesystem::path& path, bool header);

// keyframes/kf_* directories (or a single keyframe directory) to world-frame points.
std::vector<CloudPoint> keyframe_cloud(const std::filesystem::path& kf_dir, double max_depth);

}  // namespace densevo
