// Python bindings for the densevo core.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

#include "densevo/config.hpp"
#include "densevo/dataset_io.hpp"
#include "densevo/depth_filter.hpp"
#include "densevo/depth_search.hpp"
#include "densevo/eval.hpp"
#include "densevo/geometry.hpp"
#include "densevo/pipeline.hpp"
#include "densevo/synth.hpp"

namespace py = pybind11;
using namespace densevo;

namespace {

using Mat4 = Eigen::Matrix4d;
using TrajArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Pose pose_from_matrix(const Mat4& m) { return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()}; }

// Rows of (timestamp, tx, ty, tz, qx, qy, qz, qw).
py::array_t<double> trajectory_to_array(const Trajectory& t) {
  py::array_t<double> out({static_cast<py::ssize_t>(t.size()), py::ssize_t{8}});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto q = t[i].pose.quaternion();
    const auto& p = t[i].pose.translation();
    const double row[8] = {t[i].timestamp, p.x(), p.y(), p.z(), q.x(), q.y(), q.z(), q.w()};
    for (int j = 0; j < 8; ++j) a(i, j) = row[j];
  }
  return out;
}

Trajectory array_to_trajectory(const TrajArray& arr) {
  if (arr.ndim() != 2 || arr.shape(1) != 8)
    throw std::invalid_argument("trajectory array must have shape (N, 8)");
  const auto a = arr.unchecked<2>();
  Trajectory t;
  for (py::ssize_t i = 0; i < a.shape(0); ++i)
    t.push_back({a(i, 0), Pose::from_quaternion(Eigen::Quaterniond(a(i, 7), a(i, 4), a(i, 5), a(i, 6)),
                                                Vec3(a(i, 1), a(i, 2), a(i, 3)))});
  return t;
}

template <typename T>
py::array_t<T> raster_to_array(const Raster<T>& r) {
  py::array_t<T> out({static_cast<py::ssize_t>(r.height()), static_cast<py::ssize_t>(r.width())});
  std::memcpy(out.mutable_data(), r.storage().data(), r.size() * sizeof(T));
  return out;
}

LabelImage array_to_labels(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("label image must be 2-D");
  LabelImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(img.storage().data(), a.data(), img.size());
  return img;
}

std::map<std::string, std::string> to_key_values(const py::dict& d) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : d) kv[py::str(k)] = py::str(v);
  return kv;
}

PipelineConfig config_from(const py::object& cfg) {
  if (cfg.is_none()) return {};
  if (py::isinstance<py::dict>(cfg)) {
    std::ostringstream text;
    for (const auto& [k, v] : to_key_values(cfg.cast<py::dict>())) text << k << " = " << v << "\n";
    std::istringstream in(text.str());
    return parse_config(in, "dict");
  }
  return load_config(cfg.cast<std::filesystem::path>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dense monocular visual odometry with learned priors";

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int w, int h) {
             Intrinsics K{fx, fy, cx, cy, w, h};
             K.validate();
             return K;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height)
      .def("matrix", &Intrinsics::matrix)
      .def("__repr__", [](const Intrinsics& K) {
        std::ostringstream s;
        s << "Intrinsics(fx=" << K.fx << ", fy=" << K.fy << ", cx=" << K.cx << ", cy=" << K.cy
          << ", width=" << K.width << ", height=" << K.height << ")";
        return s.str();
      });
  m.def("default_intrinsics", &synth::default_intrinsics);

  m.def("se3_exp", [](const Twist& xi) { return se3_exp(xi).matrix(); }, py::arg("xi"),
        "Twist (omega, v) to a 4x4 rigid transform.");
  m.def("se3_log", [](const Mat4& T) { return se3_log(pose_from_matrix(T)); }, py::arg("T"));
  m.def(
      "project",
      [](double u, double v, double depth, const Mat4& T, const Intrinsics& K) -> py::object {
        const Projection p = project({u, v}, depth, pose_from_matrix(T), K);
        if (!p.in_front) return py::none();
        return py::make_tuple(p.pixel.u, p.pixel.v, p.depth, p.valid());
      },
      py::arg("u"), py::arg("v"), py::arg("depth"), py::arg("T"), py::arg("K"),
      "(u', v', depth', inside_image) or None behind the camera.");
  m.def(
      "back_project", [](double u, double v, double depth, const Intrinsics& K) {
        return back_project({u, v}, depth, K);
      },
      py::arg("u"), py::arg("v"), py::arg("depth"), py::arg("K"));

  py::class_<FilterParams>(m, "FilterParams")
      .def(py::init<>())
      .def_readwrite("beta_strength", &FilterParams::beta_strength)
      .def_readwrite("sigma0_pct", &FilterParams::sigma0_pct)
      .def_readwrite("d_min", &FilterParams::d_min)
      .def_readwrite("d_max", &FilterParams::d_max)
      .def_readwrite("tau_lambda", &FilterParams::tau_lambda);
  py::class_<PixelState>(m, "PixelState")
      .def(py::init([](double a, double b, double mu, double sigma) { return PixelState{a, b, mu, sigma}; }),
           py::arg("alpha"), py::arg("beta"), py::arg("mu"), py::arg("sigma"))
      .def_readwrite("alpha", &PixelState::alpha)
      .def_readwrite("beta", &PixelState::beta)
      .def_readwrite("mu", &PixelState::mu)
      .def_readwrite("sigma", &PixelState::sigma)
      .def_property_readonly("inlier_prob", [](const PixelState& s) { return inlier_prob(s); })
      .def("__repr__", [](const PixelState& s) {
        std::ostringstream o;
        o << "PixelState(alpha=" << s.alpha << ", beta=" << s.beta << ", mu=" << s.mu << ", sigma=" << s.sigma
          << ")";
        return o.str();
      });
  m.def("init_pixel", &init_pixel, py::arg("depth"), py::arg("mask"), py::arg("params") = FilterParams{});
  m.def(
      "update",
      [](const PixelState& s, double d, double tau_sq, const FilterParams& p) -> py::object {
        const UpdateOutcome out = update(s, Measurement{d, tau_sq}, p);
        if (!out.accepted) return py::none();
        return py::cast(out.state);
      },
      py::arg("state"), py::arg("d"), py::arg("tau_sq"), py::arg("params") = FilterParams{},
      "Moment-matched posterior, or None when the update is rejected.");
  m.def("measurement_variance", &measurement_variance, py::arg("depth_range"), py::arg("pixel_range"),
        py::arg("params") = FilterParams{});
  m.def(
      "ncc", [](const std::vector<double>& a, const std::vector<double>& b) { return ncc(a, b); },
      py::arg("patch_kf"), py::arg("patch_f"));

  m.def(
      "synth",
      [](const std::string& scene, int frames, const std::filesystem::path& out, std::uint64_t seed,
         const py::dict& overrides, double frame_rate) {
        synth::SceneDesc desc;
        Intrinsics K = synth::default_intrinsics();
        synth::apply_scene_config(desc, K, to_key_values(overrides));
        desc.kind = synth::parse_scene_kind(scene);
        desc.seed = seed;
        synth::write_sequence(synth::render(desc, K, frames, frame_rate), out);
      },
      py::arg("scene"), py::arg("frames"), py::arg("out"), py::arg("seed") = 0,
      py::arg("overrides") = py::dict(), py::arg("frame_rate") = 10.0,
      "Render a synthetic sequence into a dataset directory.");

  m.def(
      "run",
      [](const std::filesystem::path& seq_dir, const py::object& config, const std::optional<std::filesystem::path>& out,
         std::optional<int> snippet) {
        PipelineConfig cfg = config_from(config);
        if (snippet) cfg.snippet_len = *snippet;
        cfg.validate();
        std::vector<RunOutput> runs;
        {
          py::gil_scoped_release release;
          const DiskSequence seq(seq_dir, cfg.frame_rate);
          if (cfg.snippet_len)
            runs = run_snippets(seq, cfg, *cfg.snippet_len);
          else
            runs.push_back(run(seq, cfg));
          if (out) write_run_output(runs, cfg, *out, false);
        }
        py::list keyframes;
        for (const auto& r : runs)
          for (const auto& kf : r.keyframes) {
            py::dict d;
            d["frame_index"] = kf.frame_index;
            d["world_from_cam"] = kf.world_from_cam.matrix();
            d["depth"] = raster_to_array(kf.depth());
            if (!kf.sem.empty()) d["labels"] = raster_to_array(kf.sem.argmax());
            if (!kf.raw_sem.empty()) d["raw_labels"] = raster_to_array(kf.raw_sem.argmax());
            keyframes.append(d);
          }
        py::dict result;
        result["trajectory"] = trajectory_to_array(concat_trajectories(runs));
        result["keyframes"] = keyframes;
        result["runs"] = runs.size();
        return result;
      },
      py::arg("seq_dir"), py::arg("config") = py::none(), py::arg("out") = py::none(),
      py::arg("snippet") = py::none(),
      "Run the front-end. config is a key=value file path, a dict of keys, or None for defaults.");

  m.def(
      "read_trajectory", [](const std::filesystem::path& p) { return trajectory_to_array(read_trajectory(p)); },
      py::arg("path"));
  m.def(
      "write_trajectory",
      [](const TrajArray& t, const std::filesystem::path& p) { write_trajectory(array_to_trajectory(t), p); },
      py::arg("trajectory"), py::arg("path"));
  m.def(
      "ate_rmse",
      [](const TrajArray& est, const TrajArray& gt, const std::string& align) {
        return ate_rmse(array_to_trajectory(est), array_to_trajectory(gt), parse_align_mode(align));
      },
      py::arg("est"), py::arg("gt"), py::arg("align") = "sim3");
  m.def(
      "snippet_ate",
      [](const TrajArray& est, const TrajArray& gt, int n, const std::string& align) {
        const SnippetAte s =
            snippet_ate(array_to_trajectory(est), array_to_trajectory(gt), n, parse_align_mode(align));
        return py::make_tuple(s.mean, s.std, s.count);
      },
      py::arg("est"), py::arg("gt"), py::arg("n"), py::arg("align") = "sim3", "(mean, std, count)");
  m.def(
      "miou",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& gt,
         int n_classes) { return miou(array_to_labels(pred), array_to_labels(gt), n_classes); },
      py::arg("pred"), py::arg("gt"), py::arg("n_classes"));

  m.def(
      "load_config", [](const py::object& cfg) { return dump_config(config_from(cfg)); }, py::arg("config"),
      "Validated config rendered as key = value text.");
}
