#include "densevo/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace fs = std::filesystem;

namespace densevo {

namespace {

[[noreturn]] void fail(const fs::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

std::uint32_t bswap32(std::uint32_t x) {
  return ((x & 0xffu) << 24) | ((x & 0xff00u) << 8) | ((x >> 8) & 0xff00u) | (x >> 24);
}

void to_little_endian(std::vector<float>& v) {
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : v) f = std::bit_cast<float>(bswap32(std::bit_cast<std::uint32_t>(f)));
  }
}

}  // namespace

void PriorBundle::validate(const std::string& source) const {
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const float d = depth[i];
    if (!std::isfinite(d) || !(d > 0.0f))
      throw std::runtime_error(source + ": depth must be finite and positive (pixel " +
                               std::to_string(i) + " = " + std::to_string(d) + ")");
  }
  if (mask) {
    if (mask->width() != depth.width() || mask->height() != depth.height())
      throw std::runtime_error(source + ": mask dimensions differ from depth");
    for (std::size_t i = 0; i < mask->size(); ++i) {
      const float m = (*mask)[i];
      if (!std::isfinite(m) || m < 0.0f || m > 1.0f)
        throw std::runtime_error(source + ": mask value outside [0,1] at pixel " +
                                 std::to_string(i));
    }
  }
  if (sem) {
    if (sem->width() != depth.width() || sem->height() != depth.height())
      throw std::runtime_error(source + ": semantic dimensions differ from depth");
    for (int v = 0; v < sem->height(); ++v)
      for (int u = 0; u < sem->width(); ++u) {
        double sum = 0;
        for (int c = 0; c < sem->n_classes(); ++c) {
          const float p = (*sem)(c, u, v);
          if (!std::isfinite(p) || p < 0.0f)
            throw std::runtime_error(source + ": invalid semantic probability at (" +
                                     std::to_string(u) + "," + std::to_string(v) + ")");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-4)
          throw std::runtime_error(source + ": semantic vector at (" + std::to_string(u) + "," +
                                   std::to_string(v) + ") sums to " + std::to_string(sum));
      }
  }
}

InMemorySequence::InMemorySequence(Intrinsics K, std::vector<SequenceFrame> frames,
                                   std::vector<std::string> class_names)
    : K_(K), frames_(std::move(frames)), class_names_(std::move(class_names)) {
  K_.validate();
  for (std::size_t k = 1; k < frames_.size(); ++k)
    if (frames_[k].index <= frames_[k - 1].index)
      throw std::invalid_argument("InMemorySequence: frame indices must be strictly increasing");
}

std::string frame_name(int index, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return std::string(buf) + ext;
}

std::vector<float> read_f32(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != count * sizeof(float))
    fail(path, "expected " + std::to_string(count * sizeof(float)) + " bytes, found " +
                   std::to_string(bytes));
  in.seekg(0);
  std::vector<float> out(count);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!in) fail(path, "short read");
  to_little_endian(out);
  return out;
}

void write_f32(const fs::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot write");
  std::vector<float> le(values.begin(), values.end());
  to_little_endian(le);
  out.write(reinterpret_cast<const char*>(le.data()),
            static_cast<std::streamsize>(le.size() * sizeof(float)));
  if (!out) fail(path, "write failed");
}

Raster<float> read_f32_raster(const fs::path& path, int width, int height) {
  return Raster<float>(width, height,
                       read_f32(path, static_cast<std::size_t>(width) * height));
}

void write_f32_raster(const fs::path& path, const Raster<float>& r) { write_f32(path, r.data()); }

RgbImage read_image(const fs::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(path, "cannot read image");
  if (m.depth() != CV_8U) fail(path, "only 8-bit images are supported");
  RgbImage out(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(v);
    for (int u = 0; u < m.cols; ++u) {
      switch (m.channels()) {
        case 1: out(u, v) = {row[u], row[u], row[u]}; break;
        case 3: out(u, v) = {row[3 * u + 2], row[3 * u + 1], row[3 * u]}; break;
        case 4: out(u, v) = {row[4 * u + 2], row[4 * u + 1], row[4 * u]}; break;
        default: fail(path, "unsupported channel count");
      }
    }
  }
  return out;
}

void write_image(const fs::path& path, const RgbImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int v = 0; v < img.height(); ++v) {
    auto* row = m.ptr<std::uint8_t>(v);
    for (int u = 0; u < img.width(); ++u) {
      const Rgb8 c = img(u, v);
      row[3 * u] = c.b;
      row[3 * u + 1] = c.g;
      row[3 * u + 2] = c.r;
    }
  }
  if (!cv::imwrite(path.string(), m)) fail(path, "cannot write image");
}

LabelImage read_label_image(const fs::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) fail(path, "cannot read label image");
  if (m.type() != CV_8UC1) fail(path, "label image must be 8-bit single channel");
  LabelImage out(m.cols, m.rows);
  for (int v = 0; v < m.rows; ++v) std::memcpy(&out(0, v), m.ptr<std::uint8_t>(v), m.cols);
  return out;
}

void write_label_image(const fs::path& path, const LabelImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC1);
  for (int v = 0; v < img.height(); ++v) std::memcpy(m.ptr<std::uint8_t>(v), &img(0, v), img.width());
  if (!cv::imwrite(path.string(), m)) fail(path, "cannot write label image");
}

std::vector<std::string> read_sem_meta(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open");
  int count = 0;
  std::string names;
  if (!(in >> count) || count <= 0) fail(path, "expected \"C class0,class1,...\"");
  std::getline(in, names);
  names.erase(0, names.find_first_not_of(" \t"));
  std::vector<std::string> out;
  std::stringstream ss(names);
  for (std::string tok; std::getline(ss, tok, ',');) {
    while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.back()))) tok.pop_back();
    out.push_back(tok);
  }
  if (static_cast<int>(out.size()) != count)
    fail(path, "declares " + std::to_string(count) + " classes but names " +
                   std::to_string(out.size()));
  return out;
}

void write_sem_meta(const fs::path& path, const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) fail(path, "cannot write");
  out << names.size() << ' ';
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
}

void write_prior_bundle(const fs::path& seq_dir, int index, const PriorBundle& p) {
  const fs::path pri = seq_dir / "priors";
  fs::create_directories(pri / "depth");
  write_f32_raster(pri / "depth" / frame_name(index, ".f32"), p.depth);
  if (p.mask) {
    fs::create_directories(pri / "mask");
    write_f32_raster(pri / "mask" / frame_name(index, ".f32"), *p.mask);
  }
  if (p.sem) {
    fs::create_directories(pri / "sem");
    write_f32(pri / "sem" / frame_name(index, ".f32"), p.sem->data());
  }
}

DiskSequence::DiskSequence(const fs::path& dir, double frame_rate) : dir_(dir) {
  if (!fs::is_directory(dir)) fail(dir, "sequence directory does not exist");
  const fs::path calib = dir / "calib.txt";
  if (!fs::exists(calib)) fail(calib, "missing calibration file");
  K_ = read_calib(calib.string());

  const fs::path images = dir / "images";
  if (!fs::is_directory(images)) fail(images, "missing images directory");
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    try {
      std::size_t pos = 0;
      const int idx = std::stoi(stem, &pos);
      if (pos == stem.size()) indices_.push_back(idx);
    } catch (const std::exception&) {
    }
  }
  std::sort(indices_.begin(), indices_.end());

  const fs::path ts = dir / "timestamps.txt";
  if (fs::exists(ts)) {
    std::ifstream in(ts);
    for (double t; in >> t;) timestamps_.push_back(t);
    if (timestamps_.size() != indices_.size())
      fail(ts, "expected " + std::to_string(indices_.size()) + " timestamps");
  } else {
    if (!(frame_rate > 0)) throw std::invalid_argument("frame_rate must be positive");
    for (int idx : indices_) timestamps_.push_back(idx / frame_rate);
  }
  for (std::size_t k = 1; k < timestamps_.size(); ++k)
    if (!(timestamps_[k] > timestamps_[k - 1])) fail(ts, "timestamps must be strictly increasing");

  if (fs::exists(dir / "sem_meta.txt")) class_names_ = read_sem_meta(dir / "sem_meta.txt");
}

SequenceFrame DiskSequence::frame(std::size_t k) const {
  SequenceFrame f;
  f.index = indices_.at(k);
  f.timestamp = timestamps_.at(k);
  const fs::path img_path = dir_ / "images" / frame_name(f.index, ".png");
  f.image = read_image(img_path);
  if (f.image.width() != K_.width || f.image.height() != K_.height)
    fail(img_path, "image size does not match calib.txt");

  const auto w = K_.width, h = K_.height;
  const fs::path depth_path = dir_ / "priors" / "depth" / frame_name(f.index, ".f32");
  if (!fs::exists(depth_path)) return f;

  PriorBundle p;
  p.depth = read_f32_raster(depth_path, w, h);
  p.validate(depth_path.string());
  const fs::path mask_path = dir_ / "priors" / "mask" / frame_name(f.index, ".f32");
  if (fs::exists(mask_path)) {
    PriorBundle probe{p.depth, read_f32_raster(mask_path, w, h), std::nullopt};
    probe.validate(mask_path.string());
    p.mask = std::move(probe.mask);
  }
  const fs::path sem_path = dir_ / "priors" / "sem" / frame_name(f.index, ".f32");
  if (fs::exists(sem_path)) {
    if (class_names_.empty()) fail(sem_path, "semantic prior present but sem_meta.txt missing");
    const int C = static_cast<int>(class_names_.size());
    PriorBundle probe{p.depth, std::nullopt,
                      SemanticRaster(C, w, h, read_f32(sem_path, static_cast<std::size_t>(C) * w * h))};
    probe.validate(sem_path.string());
    p.sem = std::move(probe.sem);
  }
  f.priors = std::move(p);
  return f;
}

std::optional<Trajectory> DiskSequence::ground_truth() const {
  const fs::path gt = dir_ / "gt_traj.txt";
  if (!fs::exists(gt)) return std::nullopt;
  return read_trajectory(gt);
}

std::string format_trajectory_line(const TrajectoryEntry& e) {
  const Vec3 t = e.pose.translation();
  const Eigen::Quaterniond q = e.pose.quaternion();
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g", e.timestamp,
                t.x() + 0.0, t.y() + 0.0, t.z() + 0.0, q.x() + 0.0, q.y() + 0.0, q.z() + 0.0,
                q.w() + 0.0);
  return buf;
}

void write_trajectory(const Trajectory& traj, const fs::path& path) {
  for (std::size_t k = 1; k < traj.size(); ++k)
    if (!(traj[k].timestamp > traj[k - 1].timestamp))
      throw std::invalid_argument("write_trajectory: timestamps must be strictly increasing");
  std::ofstream out(path);
  if (!out) fail(path, "cannot write trajectory");
  for (const auto& e : traj) out << format_trajectory_line(e) << '\n';
  if (!out) fail(path, "write failed");
}

Trajectory read_trajectory(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, "cannot open trajectory");
  Trajectory out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      fail(path, "malformed pose on line " + std::to_string(lineno));
    out.push_back({t, Pose::from_quaternion(Eigen::Quaterniond(qw, qx, qy, qz), Vec3(tx, ty, tz))});
  }
  return out;
}

void write_ply(const std::vector<CloudPoint>& points, const fs::path& path) {
  const bool labels = !points.empty() &&
                      std::all_of(points.begin(), points.end(),
                                  [](const CloudPoint& p) { return p.label.has_value(); });
  for (const auto& p : points)
    if (!p.xyz.allFinite()) throw std::invalid_argument("write_ply: non-finite coordinate");
  std::ofstream out(path);
  if (!out) fail(path, "cannot write point cloud");
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (labels) out << "property uchar label\n";
  out << "end_header\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.7g %.7g %.7g %u %u %u", p.xyz.x(), p.xyz.y(), p.xyz.z(),
                  unsigned{p.rgb.r}, unsigned{p.rgb.g}, unsigned{p.rgb.b});
    out << buf;
    if (labels) out << ' ' << unsigned{*p.label};
    out << '\n';
  }
  if (!out) fail(path, "write failed");
}

}  // namespace densevo
