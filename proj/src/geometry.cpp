#include "densevo/geometry.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace densevo {

void Intrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0))
    throw std::invalid_argument("Intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("Intrinsics: image size must be positive");
  if (!(cx >= 0 && cx < width && cy >= 0 && cy < height))
    throw std::invalid_argument("Intrinsics: principal point outside the image");
}

Mat3 Intrinsics::matrix() const {
  Mat3 K;
  K << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return K;
}

Intrinsics read_calib(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration file: " + path);
  std::string line;
  std::getline(in, line);
  std::istringstream ss(line);
  Intrinsics K;
  if (!(ss >> K.fx >> K.fy >> K.cx >> K.cy >> K.width >> K.height))
    throw std::runtime_error("malformed calibration line in " + path +
                             " (expected \"fx fy cx cy width height\")");
  try {
    K.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return K;
}

void write_calib(const Intrinsics& K, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write calibration file: " + path);
  out << std::setprecision(17) << K.fx << ' ' << K.fy << ' ' << K.cx << ' ' << K.cy
      << ' ' << K.width << ' ' << K.height << '\n';
}

Eigen::Quaterniond Pose::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  return q;
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d M = Eigen::Matrix4d::Identity();
  M.topLeftCorner<3, 3>() = rotation_;
  M.topRightCorner<3, 1>() = translation_;
  return M;
}

bool Pose::is_valid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  if ((rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
    return false;
  return std::abs(rotation_.determinant() - 1.0) <= tol;
}

Mat3 hat(const Vec3& w) {
  Mat3 W;
  W << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return W;
}

namespace {

// Coefficients of the SO(3)/SE(3) series:
// a = sin(t)/t, b = (1-cos t)/t^2, c = (t - sin t)/t^3.
struct RodriguesCoeffs {
  double a, b, c;
};

// Below this angle the closed forms lose digits to cancellation; the series
// truncation error is under 1e-16 there.
constexpr double kSeriesAngle = 1e-2;

RodriguesCoeffs rodrigues(double theta) {
  const double t2 = theta * theta;
  if (theta < kSeriesAngle) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0};
  }
  const double s = std::sin(theta), c = std::cos(theta);
  return {s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta)};
}

}  // namespace

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const auto k = rodrigues(theta);
  const Mat3 W = hat(omega);
  return Mat3::Identity() + k.a * W + k.b * W * W;
}

Vec3 so3_log(const Mat3& R) {
  // Shepperd-style matrix->quaternion conversion stays accurate near theta = pi,
  // where the trace formula loses the axis.
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  const Vec3 vec = q.vec();
  const double n = vec.norm();
  if (n < 1e-12) {
    // theta ~ 2n; first-order term is exact to O(n^3).
    return 2.0 * vec / q.w();
  }
  const double theta = 2.0 * std::atan2(n, q.w());
  return theta / n * vec;
}

Pose se3_exp(const Twist& xi) {
  const Vec3 omega = xi.head<3>();
  const Vec3 v = xi.tail<3>();
  const double theta = omega.norm();
  const auto k = rodrigues(theta);
  const Mat3 W = hat(omega);
  const Mat3 W2 = W * W;
  const Mat3 R = Mat3::Identity() + k.a * W + k.b * W2;
  const Mat3 V = Mat3::Identity() + k.b * W + k.c * W2;
  return {R, V * v};
}

Twist se3_log(const Pose& T) {
  const Vec3 omega = so3_log(T.rotation());
  const double theta = omega.norm();
  const Mat3 W = hat(omega);
  double d;  // (1 - a / (2 b)) / theta^2
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    d = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    const auto k = rodrigues(theta);
    d = (1.0 - k.a / (2.0 * k.b)) / (theta * theta);
  }
  const Mat3 Vinv = Mat3::Identity() - 0.5 * W + d * W * W;
  Twist xi;
  xi.head<3>() = omega;
  xi.tail<3>() = Vinv * T.translation();
  return xi;
}

Projection project(const PixelCoord& p, double depth, const Pose& T, const Intrinsics& K) {
  const Vec3 x = T * back_project(p, depth, K);
  Projection out;
  out.depth = x.z();
  out.in_front = x.z() > 0.0;
  if (!out.in_front) return out;
  out.pixel = {K.fx * x.x() / x.z() + K.cx, K.fy * x.y() / x.z() + K.cy};
  out.in_bounds = inside_image(out.pixel, K.width, K.height);
  return out;
}

namespace {

struct Cell {
  int u0, v0;
  double fu, fv;
};

// Top-left corner of the interpolation cell; the last row/column reuse the
// previous cell with fraction 1 so the closed domain [0, W-1] is covered.
std::optional<Cell> locate(const GrayImage& img, const PixelCoord& p) {
  if (img.width() < 2 || img.height() < 2) return std::nullopt;
  if (!(p.u >= 0.0 && p.v >= 0.0 && p.u <= img.width() - 1.0 && p.v <= img.height() - 1.0))
    return std::nullopt;
  int u0 = static_cast<int>(p.u);
  int v0 = static_cast<int>(p.v);
  if (u0 > img.width() - 2) u0 = img.width() - 2;
  if (v0 > img.height() - 2) v0 = img.height() - 2;
  return Cell{u0, v0, p.u - u0, p.v - v0};
}

}  // namespace

std::optional<Sample> bilinear_sample(const GrayImage& img, const PixelCoord& p) {
  const auto cell = locate(img, p);
  if (!cell) return std::nullopt;
  const auto [u0, v0, fu, fv] = *cell;
  const double i00 = img(u0, v0), i10 = img(u0 + 1, v0);
  const double i01 = img(u0, v0 + 1), i11 = img(u0 + 1, v0 + 1);
  const double top = i00 + fu * (i10 - i00);
  const double bottom = i01 + fu * (i11 - i01);
  Sample s;
  s.value = top + fv * (bottom - top);
  s.du = (1.0 - fv) * (i10 - i00) + fv * (i11 - i01);
  s.dv = bottom - top;
  return s;
}

std::optional<double> bilinear_value(const GrayImage& img, const PixelCoord& p) {
  const auto cell = locate(img, p);
  if (!cell) return std::nullopt;
  const auto [u0, v0, fu, fv] = *cell;
  const double i00 = img(u0, v0), i10 = img(u0 + 1, v0);
  const double i01 = img(u0, v0 + 1), i11 = img(u0 + 1, v0 + 1);
  const double top = i00 + fu * (i10 - i00);
  const double bottom = i01 + fu * (i11 - i01);
  return top + fv * (bottom - top);
}

}  // namespace densevo
