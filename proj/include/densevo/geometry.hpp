#pragma once

#include <optional>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "densevo/raster.hpp"

namespace densevo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
// Tangent-space increment ordered (omega, v): rotation axis-angle then translation.
using Twist = Eigen::Matrix<double, 6, 1>;

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  // Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
  Mat3 matrix() const;
  bool operator==(const Intrinsics&) const = default;
};

Intrinsics read_calib(const std::string& path);
void write_calib(const Intrinsics& K, const std::string& path);

// Rigid transform x -> R x + t. Tracker poses map keyframe-camera coordinates
// into current-frame-camera coordinates; trajectory poses are world-from-camera.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return {}; }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
    return {q.normalized().toRotationMatrix(), t};
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  Vec3 operator*(const Vec3& x) const { return rotation_ * x + translation_; }
  Pose operator*(const Pose& o) const {
    return {rotation_ * o.rotation_, rotation_ * o.translation_ + translation_};
  }
  Pose inverse() const {
    Mat3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }
  Eigen::Matrix4d matrix() const;

  // Orthonormality and det=+1 within tol.
  bool is_valid(double tol = 1e-9) const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose inverse(const Pose& a) { return a.inverse(); }

Mat3 hat(const Vec3& w);
Mat3 so3_exp(const Vec3& omega);
// Quaternion-based; stable through the theta = pi branch.
Vec3 so3_log(const Mat3& R);
Pose se3_exp(const Twist& xi);
Twist se3_log(const Pose& T);

struct PixelCoord {
  double u = 0, v = 0;
};

struct Projection {
  PixelCoord pixel;
  double depth = 0;      // projected depth d' in the target camera
  bool in_front = false; // d' > 0
  bool in_bounds = false;
  bool valid() const { return in_front && in_bounds; }
};

inline bool inside_image(const PixelCoord& p, int width, int height) {
  return p.u >= 0.0 && p.v >= 0.0 && p.u <= width - 1.0 && p.v <= height - 1.0;
}

inline Vec3 back_project(const PixelCoord& p, double depth, const Intrinsics& K) {
  return {(p.u - K.cx) / K.fx * depth, (p.v - K.cy) / K.fy * depth, depth};
}

// Lift p at the given depth, transform by T, and project with the same K.
Projection project(const PixelCoord& p, double depth, const Pose& T, const Intrinsics& K);

struct Sample {
  double value = 0;
  double du = 0;
  double dv = 0;
};

// Bilinear blend of the four neighbours and its analytic gradient. Returns
// nullopt outside [0, W-1] x [0, H-1].
std::optional<Sample> bilinear_sample(const GrayImage& img, const PixelCoord& p);
// Value only; same domain rules.
std::optional<double> bilinear_value(const GrayImage& img, const PixelCoord& p);

}  // namespace densevo
