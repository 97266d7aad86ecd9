#include "densevo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>

namespace fs = std::filesystem;

namespace densevo::synth {

SceneKind parse_scene_kind(const std::string& s) {
  if (s == "plane") return SceneKind::plane;
  if (s == "box") return SceneKind::box;
  if (s == "occluder") return SceneKind::occluder;
  throw std::invalid_argument("unknown scene kind '" + s + "' (plane|box|occluder)");
}

void SceneDesc::validate() const {
  if (!(plane_depth > 0)) throw std::invalid_argument("plane_depth must be > 0");
  if (texture.n_waves < 1) throw std::invalid_argument("n_waves must be >= 1");
  if (!(texture.min_wavelength > 0 && texture.min_wavelength <= texture.max_wavelength))
    throw std::invalid_argument("need 0 < min_wavelength <= max_wavelength");
  if (!(texture.intensity_std > 0)) throw std::invalid_argument("intensity_std must be > 0");
  if (noise.depth_sigma < 0 || noise.mask_flip < 0 || noise.sem_noise < 0)
    throw std::invalid_argument("noise levels must be >= 0");
  if (noise.mask_flip > 1 || noise.sem_noise > 1)
    throw std::invalid_argument("mask_flip and sem_noise must be <= 1");
  if (n_classes < 2 || n_classes > 255) throw std::invalid_argument("n_classes must be in [2, 255]");
  if (kind == SceneKind::occluder) {
    if (!(occluder.width > 0 && occluder.height > 0 && occluder.depth > 0))
      throw std::invalid_argument("occluder size and depth must be > 0");
    if (occluder.depth >= plane_depth)
      throw std::invalid_argument("occluder must be in front of the background plane");
  }
}

Intrinsics default_intrinsics() { return {250.0, 250.0, 207.5, 63.5, 416, 128}; }

namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finaliser
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct Wave {
  double kx, ky, phase, amp;
};

class Texture {
 public:
  Texture() = default;
  Texture(const TextureDesc& desc, std::uint64_t seed) {
    std::mt19937_64 rng(mix(seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double lmin = std::log(desc.min_wavelength), lmax = std::log(desc.max_wavelength);
    double power = 0;
    for (int i = 0; i < desc.n_waves; ++i) {
      const double lambda = std::exp(lmin + (lmax - lmin) * unit(rng));
      const double theta = 2.0 * std::numbers::pi * unit(rng);
      const double k = 2.0 * std::numbers::pi / lambda;
      Wave w{k * std::cos(theta), k * std::sin(theta), 2.0 * std::numbers::pi * unit(rng), lambda};
      power += 0.5 * w.amp * w.amp;
      waves_.push_back(w);
    }
    const double scale = desc.intensity_std / std::sqrt(power);
    for (auto& w : waves_) w.amp *= scale;
  }

  double operator()(double s, double t) const {
    double v = 0.5;
    for (const auto& w : waves_) v += w.amp * std::sin(w.kx * s + w.ky * t + w.phase);
    return std::clamp(v, 0.02, 0.98);
  }

 private:
  std::vector<Wave> waves_;
};

// Low-frequency field quantised into background classes [0, n_bg).
struct RegionField {
  double p1 = 0, p2 = 0, f1 = 1, f2 = 1;
  int n_bg = 1;
  int operator()(double s, double t) const {
    const double g = std::sin(f1 * s + p1) + std::sin(f2 * t + p2);  // [-2, 2]
    const int c = static_cast<int>((g + 2.0) / 4.0 * n_bg);
    return std::clamp(c, 0, n_bg - 1);
  }
};

struct Surface {
  Vec3 origin, e1, e2, normal;
  bool bounded = false;
  double half_w = 0, half_h = 0;
  Texture texture;
  RegionField regions;
  int fixed_class = -1;
  bool occluder = false;
};

struct Hit {
  double lambda;
  double s, t;
  const Surface* surface;
};

std::optional<Hit> intersect(const Surface& S, const Vec3& c, const Vec3& dir) {
  const double denom = S.normal.dot(dir);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double lambda = S.normal.dot(S.origin - c) / denom;
  if (!(lambda > 1e-9)) return std::nullopt;
  const Vec3 x = c + lambda * dir - S.origin;
  const double s = x.dot(S.e1), t = x.dot(S.e2);
  if (S.bounded && (std::abs(s) > S.half_w || std::abs(t) > S.half_h)) return std::nullopt;
  return Hit{lambda, s, t, &S};
}

Surface make_plane(const Vec3& origin, const Vec3& e1, const Vec3& e2, const TextureDesc& tex,
                   std::uint64_t seed, int n_bg) {
  Surface S;
  S.origin = origin;
  S.e1 = e1.normalized();
  S.e2 = e2.normalized();
  S.normal = S.e1.cross(S.e2).normalized();
  S.texture = Texture(tex, seed);
  std::mt19937_64 rng(mix(seed ^ 0x5eedull));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  S.regions = {2 * std::numbers::pi * unit(rng), 2 * std::numbers::pi * unit(rng),
               2 * std::numbers::pi / (0.9 + 0.8 * unit(rng)),
               2 * std::numbers::pi / (0.7 + 0.6 * unit(rng)), n_bg};
  return S;
}

Surface make_quad(const Vec3& centre, const Vec3& e1, const Vec3& e2, double half_w, double half_h,
                  const TextureDesc& tex, std::uint64_t seed, int cls) {
  Surface S = make_plane(centre, e1, e2, tex, seed, 1);
  S.bounded = true;
  S.half_w = half_w;
  S.half_h = half_h;
  S.fixed_class = cls;
  return S;
}

Pose camera_pose(const TrajectoryDesc& tr, int k) {
  Vec3 c = tr.velocity * k;
  if (tr.wobble_amplitude != 0)
    c.y() += tr.wobble_amplitude * std::sin(2.0 * std::numbers::pi * k / tr.wobble_period);
  return {so3_exp(tr.angular_velocity * k), c};
}

struct Scene {
  std::vector<Surface> statics;
  std::optional<Surface> occluder;  // origin at frame 0
  Vec3 occluder_velocity = Vec3::Zero();
  // Axis-aligned box used to reject cameras inside the geometry.
  std::optional<std::pair<Vec3, Vec3>> solid;

  std::vector<Surface> at_frame(int k) const {
    std::vector<Surface> out = statics;
    if (occluder) {
      Surface o = *occluder;
      o.origin += occluder_velocity * k;
      out.push_back(std::move(o));
    }
    return out;
  }
};

Scene build_scene(const SceneDesc& desc) {
  Scene scene;
  const int C = desc.n_classes;
  const int n_bg = C - 1;
  const std::uint64_t seed = desc.seed;
  const double ct = std::cos(desc.plane_tilt), st = std::sin(desc.plane_tilt);
  const Vec3 ex(1, 0, 0);
  const Vec3 ey_tilted(0, ct, st);  // plane through (0,0,D) rotated about x

  switch (desc.kind) {
    case SceneKind::plane:
      scene.statics.push_back(
          make_plane({0, 0, desc.plane_depth}, ex, ey_tilted, desc.texture, seed * 7 + 1, n_bg));
      break;
    case SceneKind::occluder: {
      scene.statics.push_back(
          make_plane({0, 0, desc.plane_depth}, ex, ey_tilted, desc.texture, seed * 7 + 1, n_bg));
      const auto& o = desc.occluder;
      TextureDesc otex = desc.texture;
      otex.intensity_std *= 1.25;
      scene.occluder = make_quad({o.offset_x, o.offset_y, o.depth}, ex, {0, 1, 0}, 0.5 * o.width,
                                 0.5 * o.height, otex, seed * 7 + 2, C - 1);
      scene.occluder->occluder = true;
      scene.occluder_velocity = desc.trajectory.velocity + o.relative_velocity;
      break;
    }
    case SceneKind::box: {
      const double D = desc.plane_depth;
      scene.statics.push_back(
          make_plane({0, 0, D + 1.5}, ex, {0, 1, 0}, desc.texture, seed * 7 + 1, n_bg));
      const Vec3 centre(0.15, 0.05, D);
      const double h = 0.35;
      const Vec3 X(1, 0, 0), Y(0, 1, 0), Z(0, 0, 1);
      std::uint64_t fs = seed * 7 + 3;
      scene.statics.push_back(make_quad(centre - h * Z, X, Y, h, h, desc.texture, fs++, C - 1));
      scene.statics.push_back(make_quad(centre + h * Z, X, Y, h, h, desc.texture, fs++, C - 1));
      scene.statics.push_back(make_quad(centre - h * X, Z, Y, h, h, desc.texture, fs++, C - 1));
      scene.statics.push_back(make_quad(centre + h * X, Z, Y, h, h, desc.texture, fs++, C - 1));
      scene.statics.push_back(make_quad(centre - h * Y, X, Z, h, h, desc.texture, fs++, C - 1));
      scene.statics.push_back(make_quad(centre + h * Y, X, Z, h, h, desc.texture, fs++, C - 1));
      scene.solid = std::make_pair(Vec3(centre.array() - h), Vec3(centre.array() + h));
      break;
    }
  }
  return scene;
}

std::optional<Hit> cast(const std::vector<Surface>& surfaces, const Vec3& c, const Vec3& dir) {
  std::optional<Hit> best;
  for (const auto& S : surfaces) {
    const auto h = intersect(S, c, dir);
    if (h && (!best || h->lambda < best->lambda)) best = h;
  }
  return best;
}

// True when the occluder blocks the segment from camera centre c to x.
bool occluded_from(const Surface& occ, const Vec3& c, const Vec3& x) {
  const auto h = intersect(occ, c, x - c);
  return h && h->lambda < 1.0 - 1e-9;
}

}  // namespace

Trajectory RenderedSequence::ground_truth() const {
  Trajectory t;
  for (const auto& f : frames) t.push_back({f.timestamp, f.world_from_cam});
  return t;
}

RenderedSequence render(const SceneDesc& desc, const Intrinsics& K, int n_frames, double frame_rate) {
  desc.validate();
  K.validate();
  if (n_frames < 1) throw std::invalid_argument("render: n_frames must be >= 1");
  const Scene scene = build_scene(desc);

  RenderedSequence seq;
  seq.K = K;
  for (int c = 0; c < desc.n_classes - 1; ++c) seq.class_names.push_back("region" + std::to_string(c));
  seq.class_names.push_back("object");

  std::vector<Pose> poses;
  for (int k = 0; k < n_frames; ++k) poses.push_back(camera_pose(desc.trajectory, k));

  for (int k = 0; k < n_frames; ++k) {
    const Pose& T = poses[k];
    const Vec3 c = T.translation();
    if (scene.solid) {
      const auto& [lo, hi] = *scene.solid;
      if ((c.array() > lo.array()).all() && (c.array() < hi.array()).all())
        throw std::invalid_argument("render: camera " + std::to_string(k) + " is inside the box");
    }
    const auto surfaces = scene.at_frame(k);
    std::optional<Surface> occ_prev, occ_next;
    if (scene.occluder) {
      if (k > 0) occ_prev = scene.at_frame(k - 1).back();
      if (k + 1 < n_frames) occ_next = scene.at_frame(k + 1).back();
    }

    GroundTruthFrame f;
    f.index = k;
    f.timestamp = k / frame_rate;
    f.world_from_cam = T;
    f.intensity = GrayImage(K.width, K.height);
    f.image = RgbImage(K.width, K.height);
    f.depth = Raster<float>(K.width, K.height);
    f.mask = Raster<float>(K.width, K.height, 1.0f);
    f.labels = LabelImage(K.width, K.height);
    for (int v = 0; v < K.height; ++v)
      for (int u = 0; u < K.width; ++u) {
        const Vec3 ray((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
        const Vec3 dir = T.rotation() * ray;
        const auto hit = cast(surfaces, c, dir);
        if (!hit || hit->lambda > 1e3)
          throw std::invalid_argument("render: degenerate trajectory, pixel (" + std::to_string(u) +
                                      "," + std::to_string(v) + ") of frame " +
                                      std::to_string(k) + " sees no geometry");
        if (hit->lambda < 0.05)
          throw std::invalid_argument("render: camera " + std::to_string(k) + " touches the geometry");
        const Surface& S = *hit->surface;
        const double I = S.texture(hit->s, hit->t);
        f.intensity(u, v) = static_cast<float>(I);
        const auto q = static_cast<std::uint8_t>(std::lround(I * 255.0));
        f.image(u, v) = {q, q, q};
        f.depth(u, v) = static_cast<float>(hit->lambda);
        f.labels(u, v) = static_cast<std::uint8_t>(S.fixed_class >= 0 ? S.fixed_class
                                                                     : S.regions(hit->s, hit->t));
        if (S.occluder) {
          f.mask(u, v) = 0.0f;
        } else if (occ_prev || occ_next) {
          const Vec3 x = c + hit->lambda * dir;
          if ((occ_prev && occluded_from(*occ_prev, poses[k - 1].translation(), x)) ||
              (occ_next && occluded_from(*occ_next, poses[k + 1].translation(), x)))
            f.mask(u, v) = 0.0f;
        }
      }
    seq.frames.push_back(std::move(f));
  }

  for (const auto& f : seq.frames)
    seq.priors.push_back(corrupt_priors(ideal_priors(f, desc.n_classes), desc.noise,
                                        mix(desc.seed) ^ mix(0xf00dull + static_cast<std::uint64_t>(f.index))));
  return seq;
}

PriorBundle ideal_priors(const GroundTruthFrame& f, int n_classes) {
  PriorBundle p;
  p.depth = f.depth;
  p.mask = f.mask;
  SemanticRaster sem(n_classes, f.labels.width(), f.labels.height(), 0.0f);
  for (int v = 0; v < f.labels.height(); ++v)
    for (int u = 0; u < f.labels.width(); ++u) sem(f.labels(u, v), u, v) = 1.0f;
  p.sem = std::move(sem);
  return p;
}

PriorBundle corrupt_priors(const PriorBundle& gt, const NoiseDesc& noise, std::uint64_t seed) {
  PriorBundle out = gt;
  std::mt19937_64 rng(mix(seed));
  if (noise.depth_sigma > 0) {
    std::normal_distribution<double> normal(0.0, noise.depth_sigma);
    for (std::size_t i = 0; i < out.depth.size(); ++i)
      out.depth[i] = static_cast<float>(out.depth[i] * std::exp(normal(rng)));
  }
  if (out.mask && noise.mask_flip > 0) {
    for (auto& m : out.mask->storage())
      m = static_cast<float>((1.0 - noise.mask_flip) * m + noise.mask_flip * 0.5);
  }
  if (out.sem && noise.sem_noise > 0) {
    const SemanticRaster& src = *gt.sem;
    SemanticRaster& dst = *out.sem;
    const int C = src.n_classes();
    const LabelImage labels = src.argmax();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, C - 1);
    const double r = noise.sem_noise;
    for (int v = 0; v < src.height(); ++v)
      for (int u = 0; u < src.width(); ++u) {
        int label = labels(u, v);
        if (unit(rng) < r) label = pick(rng);
        for (int c = 0; c < C; ++c)
          dst(c, u, v) = static_cast<float>((c == label ? 1.0 - r : 0.0) + r / C);
      }
  }
  return out;
}

InMemorySequence to_frame_source(const RenderedSequence& seq) {
  std::vector<SequenceFrame> frames;
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    const auto& f = seq.frames[k];
    frames.push_back({f.index, f.timestamp, f.image, seq.priors.at(k)});
  }
  return InMemorySequence(seq.K, std::move(frames), seq.class_names);
}

void write_sequence(const RenderedSequence& seq, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "gt" / "depth");
  fs::create_directories(dir / "gt" / "mask");
  fs::create_directories(dir / "gt" / "labels");
  write_calib(seq.K, (dir / "calib.txt").string());
  write_sem_meta(dir / "sem_meta.txt", seq.class_names);
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    const auto& f = seq.frames[k];
    write_image(dir / "images" / frame_name(f.index, ".png"), f.image);
    write_prior_bundle(dir, f.index, seq.priors.at(k));
    write_f32_raster(dir / "gt" / "depth" / frame_name(f.index, ".f32"), f.depth);
    write_f32_raster(dir / "gt" / "mask" / frame_name(f.index, ".f32"), f.mask);
    write_label_image(dir / "gt" / "labels" / frame_name(f.index, ".png"), f.labels);
  }
  write_trajectory(seq.ground_truth(), dir / "gt_traj.txt");
}

namespace {

double num(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("scene key '" + key + "': expected a number, got '" + s + "'");
  }
}

}  // namespace

void apply_scene_config(SceneDesc& desc, Intrinsics& K, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    const double x = key == "kind" ? 0.0 : num(key, value);
    if (key == "kind") desc.kind = parse_scene_kind(value);
    else if (key == "plane_depth") desc.plane_depth = x;
    else if (key == "plane_tilt") desc.plane_tilt = x;
    else if (key == "n_waves") desc.texture.n_waves = static_cast<int>(x);
    else if (key == "min_wavelength") desc.texture.min_wavelength = x;
    else if (key == "max_wavelength") desc.texture.max_wavelength = x;
    else if (key == "intensity_std") desc.texture.intensity_std = x;
    else if (key == "vel_x") desc.trajectory.velocity.x() = x;
    else if (key == "vel_y") desc.trajectory.velocity.y() = x;
    else if (key == "vel_z") desc.trajectory.velocity.z() = x;
    else if (key == "rot_x") desc.trajectory.angular_velocity.x() = x;
    else if (key == "rot_y") desc.trajectory.angular_velocity.y() = x;
    else if (key == "rot_z") desc.trajectory.angular_velocity.z() = x;
    else if (key == "wobble_amplitude") desc.trajectory.wobble_amplitude = x;
    else if (key == "wobble_period") desc.trajectory.wobble_period = x;
    else if (key == "occluder_width") desc.occluder.width = x;
    else if (key == "occluder_height") desc.occluder.height = x;
    else if (key == "occluder_depth") desc.occluder.depth = x;
    else if (key == "occluder_offset_x") desc.occluder.offset_x = x;
    else if (key == "occluder_offset_y") desc.occluder.offset_y = x;
    else if (key == "occluder_vel_x") desc.occluder.relative_velocity.x() = x;
    else if (key == "occluder_vel_y") desc.occluder.relative_velocity.y() = x;
    else if (key == "occluder_vel_z") desc.occluder.relative_velocity.z() = x;
    else if (key == "depth_sigma") desc.noise.depth_sigma = x;
    else if (key == "mask_flip") desc.noise.mask_flip = x;
    else if (key == "sem_noise") desc.noise.sem_noise = x;
    else if (key == "n_classes") desc.n_classes = static_cast<int>(x);
    else if (key == "seed") desc.seed = static_cast<std::uint64_t>(x);
    else if (key == "fx") K.fx = x;
    else if (key == "fy") K.fy = x;
    else if (key == "cx") K.cx = x;
    else if (key == "cy") K.cy = x;
    else if (key == "width") K.width = static_cast<int>(x);
    else if (key == "height") K.height = static_cast<int>(x);
    else throw std::runtime_error("unknown scene key '" + key + "'");
  }
  desc.validate();
  K.validate();
}

}  // namespace densevo::synth
