#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "densevo/dataset_io.hpp"
#include "densevo/geometry.hpp"

namespace densevo::synth {

enum class SceneKind { plane, box, occluder };

SceneKind parse_scene_kind(const std::string& s);

// Sum of random sinusoids in surface coordinates (meters): smooth, non-repeating.
struct TextureDesc {
  int n_waves = 40;
  double min_wavelength = 0.10;
  double max_wavelength = 1.2;
  double intensity_std = 0.16;
};

// Camera k: world_from_cam = (exp(k * angular), k * velocity + wobble(k)),
// world frame = camera 0.
struct TrajectoryDesc {
  Vec3 velocity{0.04, 0.0, 0.02};       // m / frame
  Vec3 angular_velocity{0.0, 0.003, 0.0};  // rad / frame
  double wobble_amplitude = 0.0;        // m, vertical sinusoid
  double wobble_period = 12.0;          // frames
};

// Fronto-parallel textured quad in front of the background. Its centre moves
// with the camera plus relative_velocity, so it drifts across the image.
struct OccluderDesc {
  double width = 0.6, height = 0.5;  // m
  double depth = 1.2;                // m along the first camera's optical axis
  double offset_x = -0.25, offset_y = 0.0;
  Vec3 relative_velocity{0.02, 0.0, 0.0};  // m / frame, relative to the camera
};

struct NoiseDesc {
  double depth_sigma = 0.0;  // log-space std of the multiplicative depth error
  double mask_flip = 0.0;    // mask blended toward 0.5 by this fraction
  double sem_noise = 0.0;    // label-noise rate
};

struct SceneDesc {
  SceneKind kind = SceneKind::plane;
  double plane_depth = 2.0;  // m, background plane (plane/occluder) or box centre
  double plane_tilt = 0.0;   // rad, background plane rotation about the x axis
  TextureDesc texture;
  TrajectoryDesc trajectory;
  OccluderDesc occluder;
  NoiseDesc noise;
  int n_classes = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// 416x128, fx = fy = 250, principal point at the image centre.
Intrinsics default_intrinsics();

// Scene keys (same key = value format as the pipeline config); intrinsics keys
// fx fy cx cy width height override K.
void apply_scene_config(SceneDesc& desc, Intrinsics& K, const std::map<std::string, std::string>& kv);

struct GroundTruthFrame {
  int index = 0;
  double timestamp = 0;
  Pose world_from_cam;
  RgbImage image;
  GrayImage intensity;  // unquantised luminance
  Raster<float> depth;
  Raster<float> mask;   // 0 on occluder and disocclusion pixels
  LabelImage labels;
};

struct RenderedSequence {
  Intrinsics K;
  std::vector<std::string> class_names;
  std::vector<GroundTruthFrame> frames;
  std::vector<PriorBundle> priors;  // corrupted per desc.noise

  Trajectory ground_truth() const;
};

// Throws std::invalid_argument for degenerate trajectories (camera inside the
// geometry or rays escaping the scene).
RenderedSequence render(const SceneDesc& desc, const Intrinsics& K, int n_frames,
                        double frame_rate = 10.0);

// Ground-truth priors: exact depth and mask, one-hot semantics.
PriorBundle ideal_priors(const GroundTruthFrame& f, int n_classes);

// depth *= lognormal(depth_sigma); mask = (1 - f) gt + f / 2; semantics: with
// probability sem_noise a pixel's label is redrawn uniformly, then the one-hot
// is mixed with the uniform distribution at rate sem_noise.
PriorBundle corrupt_priors(const PriorBundle& gt, const NoiseDesc& noise, std::uint64_t seed);

InMemorySequence to_frame_source(const RenderedSequence& seq);

// Dataset layout plus gt_traj.txt and gt/{depth,mask,labels}/.
void write_sequence(const RenderedSequence& seq, const std::filesystem::path& dir);

}  // namespace densevo::synth
