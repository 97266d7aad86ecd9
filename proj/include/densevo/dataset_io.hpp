#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "densevo/geometry.hpp"
#include "densevo/raster.hpp"
#include "densevo/semantic_raster.hpp"

namespace densevo {

// Per-frame predictor outputs. depth is in meters; mask is the predicted
// inlier probability.
struct PriorBundle {
  Raster<float> depth;
  std::optional<Raster<float>> mask;
  std::optional<SemanticRaster> sem;

  // Throws std::runtime_error naming `source` on the first invariant breach.
  void validate(const std::string& source = "priors") const;
};

struct SequenceFrame {
  int index = 0;
  double timestamp = 0;
  RgbImage image;
  std::optional<PriorBundle> priors;
};

struct TrajectoryEntry {
  double timestamp = 0;
  Pose pose;  // world-from-camera
};
using Trajectory = std::vector<TrajectoryEntry>;

// Ordered access to frames of a sequence.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual const Intrinsics& intrinsics() const = 0;
  virtual std::size_t size() const = 0;
  virtual SequenceFrame frame(std::size_t k) const = 0;
  virtual std::vector<std::string> class_names() const { return {}; }
};

class InMemorySequence final : public FrameSource {
 public:
  InMemorySequence(Intrinsics K, std::vector<SequenceFrame> frames,
                   std::vector<std::string> class_names = {});
  const Intrinsics& intrinsics() const override { return K_; }
  std::size_t size() const override { return frames_.size(); }
  SequenceFrame frame(std::size_t k) const override { return frames_.at(k); }
  std::vector<std::string> class_names() const override { return class_names_; }

 private:
  Intrinsics K_;
  std::vector<SequenceFrame> frames_;
  std::vector<std::string> class_names_;
};

// Directory layout:
//   calib.txt                      "fx fy cx cy width height"
//   images/%06d.png
//   priors/depth/%06d.f32          row-major little-endian float32
//   priors/mask/%06d.f32
//   priors/sem/%06d.f32            C planes concatenated
//   sem_meta.txt                   "C class0,class1,..."
//   timestamps.txt                 optional, one value per frame
//   gt_traj.txt                    optional, "t tx ty tz qx qy qz qw"
// Frames are loaded lazily and validated on load.
class DiskSequence final : public FrameSource {
 public:
  // Timestamps default to index / frame_rate when timestamps.txt is absent.
  explicit DiskSequence(const std::filesystem::path& dir, double frame_rate = 10.0);

  const Intrinsics& intrinsics() const override { return K_; }
  std::size_t size() const override { return indices_.size(); }
  SequenceFrame frame(std::size_t k) const override;
  std::vector<std::string> class_names() const override { return class_names_; }

  const std::vector<int>& indices() const { return indices_; }
  std::optional<Trajectory> ground_truth() const;
  const std::filesystem::path& root() const { return dir_; }

 private:
  std::filesystem::path dir_;
  Intrinsics K_;
  std::vector<int> indices_;
  std::vector<double> timestamps_;
  std::vector<std::string> class_names_;
};

std::string frame_name(int index, const std::string& ext);

std::vector<float> read_f32(const std::filesystem::path& path, std::size_t count);
void write_f32(const std::filesystem::path& path, std::span<const float> values);
Raster<float> read_f32_raster(const std::filesystem::path& path, int width, int height);
void write_f32_raster(const std::filesystem::path& path, const Raster<float>& r);

RgbImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const RgbImage& img);
LabelImage read_label_image(const std::filesystem::path& path);
void write_label_image(const std::filesystem::path& path, const LabelImage& img);

// "C class0,class1,..."
std::vector<std::string> read_sem_meta(const std::filesystem::path& path);
void write_sem_meta(const std::filesystem::path& path, const std::vector<std::string>& names);

void write_prior_bundle(const std::filesystem::path& seq_dir, int index, const PriorBundle& p);

// One line per pose: "timestamp tx ty tz qx qy qz qw", qw >= 0.
std::string format_trajectory_line(const TrajectoryEntry& e);
void write_trajectory(const Trajectory& traj, const std::filesystem::path& path);
Trajectory read_trajectory(const std::filesystem::path& path);

struct CloudPoint {
  Vec3 xyz;
  Rgb8 rgb;
  std::optional<std::uint8_t> label;
};

// ASCII PLY; a label property is emitted when every point carries one.
void write_ply(const std::vector<CloudPoint>& points, const std::filesystem::path& path);

}  // namespace densevo
