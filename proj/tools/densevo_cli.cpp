// densevo command-line front end: run, eval, synth, export-cloud.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "densevo/config.hpp"
#include "densevo/dataset_io.hpp"
#include "densevo/eval.hpp"
#include "densevo/pipeline.hpp"
#include "densevo/synth.hpp"

namespace fs = std::filesystem;
using namespace densevo;

namespace {

int cmd_run(const fs::path& seq_dir, const fs::path& config, const fs::path& out_dir,
            std::optional<int> snippet, bool debug) {
  PipelineConfig cfg = load_config(config);
  if (snippet) cfg.snippet_len = *snippet;
  cfg.validate();
  const DiskSequence seq(seq_dir, cfg.frame_rate);
  std::vector<RunOutput> runs;
  if (cfg.snippet_len)
    runs = run_snippets(seq, cfg, *cfg.snippet_len);
  else
    runs.push_back(run(seq, cfg));
  write_run_output(runs, cfg, out_dir, debug);

  std::size_t n_poses = 0, n_kf = 0, n_lost = 0;
  for (const auto& r : runs) {
    n_poses += r.trajectory.size();
    n_kf += r.keyframes.size();
    for (const auto& d : r.diagnostics)
      if (d.event.rfind("tracking_lost", 0) == 0) ++n_lost;
  }
  std::printf("frames %zu keyframes %zu tracking_lost %zu runs %zu\n", n_poses, n_kf, n_lost,
              runs.size());
  return 0;
}

int cmd_eval(const fs::path& est_path, const fs::path& gt_path, const std::string& mode,
             std::optional<int> snippet, const std::string& csv) {
  const AlignMode align = parse_align_mode(mode);
  const Trajectory est = read_trajectory(est_path);
  const Trajectory gt = associate(est, read_trajectory(gt_path));
  SnippetAte ate;
  if (snippet) {
    ate = snippet_ate(est, gt, *snippet, align);
  } else {
    ate.per_snippet = {ate_rmse(est, gt, align)};
    ate.mean = ate.per_snippet[0];
    ate.count = 1;
  }
  std::printf("ATE_RMSE %.9g %.9g %d\n", ate.mean, ate.std, ate.count);
  if (!csv.empty()) {
    std::ofstream out(csv);
    if (!out) throw std::runtime_error("cannot write " + csv);
    out << "snippet,start_timestamp,ate_rmse\n";
    const std::size_t n = snippet ? static_cast<std::size_t>(*snippet) : est.size();
    char buf[128];
    for (std::size_t i = 0; i < ate.per_snippet.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.9f,%.9g\n", i, est[i * n].timestamp, ate.per_snippet[i]);
      out << buf;
    }
  }
  return 0;
}

int cmd_synth(const std::string& scene, int frames, const fs::path& out_dir, std::uint64_t seed,
              const std::string& config, double frame_rate) {
  synth::SceneDesc desc;
  Intrinsics K = synth::default_intrinsics();
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw std::runtime_error("cannot open scene config " + config);
    synth::apply_scene_config(desc, K, read_key_values(in, config));
  }
  desc.kind = synth::parse_scene_kind(scene);
  desc.seed = seed;
  const synth::RenderedSequence seq = synth::render(desc, K, frames, frame_rate);
  synth::write_sequence(seq, out_dir);
  std::printf("wrote %d frames to %s\n", frames, out_dir.string().c_str());
  return 0;
}

int cmd_export_cloud(const fs::path& kf_dir, const fs::path& out, double max_depth) {
  const auto cloud = keyframe_cloud(kf_dir, max_depth);
  write_ply(cloud, out);
  std::printf("points %zu\n", cloud.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense monocular visual odometry with learned priors"};
  app.require_subcommand(1);

  std::string seq_dir, config, out_dir;
  std::optional<int> snippet;
  bool debug = false;
  auto* run_cmd = app.add_subcommand("run", "Track a sequence and write poses and keyframes");
  run_cmd->add_option("--seq", seq_dir, "Sequence directory")->required();
  run_cmd->add_option("--config", config, "key=value config file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--snippet", snippet, "Run consecutive N-frame snippets")
      ->check(CLI::Range(2, 1 << 30));
  run_cmd->add_flag("--debug-rasters", debug, "Also write filter state and NCC rasters");

  std::string est, gt, align_mode, csv;
  std::optional<int> eval_snippet;
  auto* eval_cmd = app.add_subcommand("eval", "ATE RMSE of an estimate against ground truth");
  eval_cmd->add_option("--est", est, "Estimated trajectory")->required();
  eval_cmd->add_option("--gt", gt, "Ground-truth trajectory")->required();
  eval_cmd->add_option("--align", align_mode, "Alignment")
      ->required()
      ->check(CLI::IsMember({"none", "se3", "sim3"}));
  eval_cmd->add_option("--snippet", eval_snippet, "Snippet length")->check(CLI::Range(2, 1 << 30));
  eval_cmd->add_option("--csv", csv, "Per-snippet CSV output");

  std::string scene, scene_config;
  int frames = 0;
  std::uint64_t seed = 0;
  double frame_rate = 10.0;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic sequence");
  synth_cmd->add_option("--scene", scene, "Scene kind")
      ->required()
      ->check(CLI::IsMember({"plane", "box", "occluder"}));
  synth_cmd->add_option("--frames", frames, "Number of frames")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", out_dir, "Output sequence directory")->required();
  synth_cmd->add_option("--seed", seed, "Random seed")->required();
  synth_cmd->add_option("--config", scene_config, "Scene key=value overrides");
  synth_cmd->add_option("--frame-rate", frame_rate, "Frames per second")->check(CLI::PositiveNumber);

  std::string kf_dir, ply;
  double max_depth = 0;
  auto* cloud_cmd = app.add_subcommand("export-cloud", "Keyframe depth maps to a PLY point cloud");
  cloud_cmd->add_option("--kf-dir", kf_dir, "Keyframe directory or keyframes/ parent")->required();
  cloud_cmd->add_option("--out", ply, "Output .ply")->required();
  cloud_cmd->add_option("--max-depth", max_depth, "Drop points beyond this depth (0 = keep all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(seq_dir, config, out_dir, snippet, debug);
    if (eval_cmd->parsed()) return cmd_eval(est, gt, align_mode, eval_snippet, csv);
    if (synth_cmd->parsed()) return cmd_synth(scene, frames, out_dir, seed, scene_config, frame_rate);
    if (cloud_cmd->parsed()) return cmd_export_cloud(kf_dir, ply, max_depth);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
