#include "densevo/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace densevo {

void PipelineConfig::validate() const {
  track.validate();
  filter.validate();
  search.validate();
  keyframe.validate();
  if (snippet_len && *snippet_len < 2) throw std::invalid_argument("snippet_len must be >= 2");
  if (!(frame_rate > 0)) throw std::invalid_argument("frame_rate must be > 0");
  if (pixel_stride < 1) throw std::invalid_argument("pixel_stride must be >= 1");
  if (!(sem_inlier_threshold >= 0 && sem_inlier_threshold <= 1))
    throw std::invalid_argument("sem_inlier_threshold must be in [0, 1]");
}

PipelineConfig PipelineConfig::outdoor() { return {}; }

PipelineConfig PipelineConfig::indoor() {
  PipelineConfig c;
  c.track.levels = 2;
  c.track.motion_model = false;
  c.filter.d_min = 0.02;
  c.filter.d_max = 5.0;
  return c;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': expected a number, got '" + s + "'");
  }
}

int to_int(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw std::runtime_error("config key '" + key + "': expected an integer, got '" + s + "'");
  }
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(std::numeric_limits<double>::max_digits10);
  ss << v;
  return ss.str();
}

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename Member>
Field real_field(std::string key, Member member) {
  return {key,
          [member, key](PipelineConfig& c, const std::string& s) { member(c) = to_double(s, key); },
          [member](const PipelineConfig& c) { return fmt(member(const_cast<PipelineConfig&>(c))); }};
}

template <typename Member>
Field int_field(std::string key, Member member) {
  return {key, [member, key](PipelineConfig& c, const std::string& s) { member(c) = to_int(s, key); },
          [member](const PipelineConfig& c) {
            return std::to_string(member(const_cast<PipelineConfig&>(c)));
          }};
}

template <typename Member>
Field bool_field(std::string key, Member member) {
  return {key,
          [member, key](PipelineConfig& c, const std::string& s) { member(c) = parse_bool(s, key); },
          [member](const PipelineConfig& c) {
            return std::string(member(const_cast<PipelineConfig&>(c)) ? "true" : "false");
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      // TrackConfig
      real_field("huber_delta", [](PipelineConfig& c) -> double& { return c.track.huber_delta; }),
      real_field("affine_weight", [](PipelineConfig& c) -> double& { return c.track.affine_weight; }),
      int_field("max_iters", [](PipelineConfig& c) -> int& { return c.track.max_iters; }),
      real_field("convergence_tol", [](PipelineConfig& c) -> double& { return c.track.convergence_tol; }),
      real_field("track_min_valid_ratio",
                 [](PipelineConfig& c) -> double& { return c.track.min_valid_ratio; }),
      int_field("levels", [](PipelineConfig& c) -> int& { return c.track.levels; }),
      bool_field("motion_model", [](PipelineConfig& c) -> bool& { return c.track.motion_model; }),
      // FilterParams
      real_field("beta_strength", [](PipelineConfig& c) -> double& { return c.filter.beta_strength; }),
      real_field("sigma0_pct", [](PipelineConfig& c) -> double& { return c.filter.sigma0_pct; }),
      real_field("d_min", [](PipelineConfig& c) -> double& { return c.filter.d_min; }),
      real_field("d_max", [](PipelineConfig& c) -> double& { return c.filter.d_max; }),
      real_field("tau_lambda", [](PipelineConfig& c) -> double& { return c.filter.tau_lambda; }),
      // SearchConfig
      int_field("n_samples", [](PipelineConfig& c) -> int& { return c.search.n_samples; }),
      int_field("patch_radius", [](PipelineConfig& c) -> int& { return c.search.patch_radius; }),
      real_field("min_ncc", [](PipelineConfig& c) -> double& { return c.search.min_ncc; }),
      real_field("min_pixel_range", [](PipelineConfig& c) -> double& { return c.search.min_pixel_range; }),
      real_field("min_patch_variance",
                 [](PipelineConfig& c) -> double& { return c.search.min_patch_variance; }),
      // KfCriteria
      int_field("max_frames", [](PipelineConfig& c) -> int& { return c.keyframe.max_frames; }),
      real_field("min_valid_ratio", [](PipelineConfig& c) -> double& { return c.keyframe.min_valid_ratio; }),
      // PipelineConfig
      {"snippet_len",
       [](PipelineConfig& c, const std::string& s) {
         if (s == "none" || s == "0")
           c.snippet_len.reset();
         else
           c.snippet_len = to_int(s, "snippet_len");
       },
       [](const PipelineConfig& c) {
         return c.snippet_len ? std::to_string(*c.snippet_len) : std::string("none");
       }},
      real_field("frame_rate", [](PipelineConfig& c) -> double& { return c.frame_rate; }),
      int_field("pixel_stride", [](PipelineConfig& c) -> int& { return c.pixel_stride; }),
      real_field("sem_inlier_threshold", [](PipelineConfig& c) -> double& { return c.sem_inlier_threshold; }),
      bool_field("use_outlier_mask", [](PipelineConfig& c) -> bool& { return c.use_outlier_mask; }),
      bool_field("posterior_update", [](PipelineConfig& c) -> bool& { return c.posterior_update; }),
      bool_field("down_weighting", [](PipelineConfig& c) -> bool& { return c.down_weighting; }),
  };
  return table;
}

}  // namespace

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::runtime_error("config key '" + key + "': expected a boolean, got '" + s + "'");
}

std::map<std::string, std::string> read_key_values(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::runtime_error(source + ":" + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(key, value).second)
      throw std::runtime_error(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

void apply_config(PipelineConfig& cfg, const std::map<std::string, std::string>& kv,
                  const std::string& source) {
  for (const auto& [key, value] : kv) {
    if (key == "preset") continue;
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw std::runtime_error(source + ": unknown config key '" + key + "'");
    it->set(cfg, value);
  }
}

PipelineConfig parse_config(std::istream& in, const std::string& source) {
  const auto kv = read_key_values(in, source);
  PipelineConfig cfg;
  if (const auto it = kv.find("preset"); it != kv.end()) {
    if (it->second == "indoor")
      cfg = PipelineConfig::indoor();
    else if (it->second != "outdoor")
      throw std::runtime_error(source + ": preset must be 'outdoor' or 'indoor'");
  }
  apply_config(cfg, kv, source);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(source + ": " + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  return parse_config(in, path.string());
}

std::string dump_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace densevo
