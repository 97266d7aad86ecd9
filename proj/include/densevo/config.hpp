#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "densevo/depth_filter.hpp"
#include "densevo/depth_search.hpp"
#include "densevo/keyframe.hpp"
#include "densevo/tracker.hpp"

namespace densevo {

struct PipelineConfig {
  TrackConfig track;
  FilterParams filter;
  SearchConfig search;
  KfCriteria keyframe;
  std::optional<int> snippet_len;
  double frame_rate = 10.0;
  int pixel_stride = 1;  // depth search / posterior update stride
  double sem_inlier_threshold = 0.6;
  // Ablation switches: outlier-mask prior, posterior update, down-weighting.
  bool use_outlier_mask = true;
  bool posterior_update = true;
  bool down_weighting = true;

  void validate() const;

  // 4 pyramid levels, motion model on, inverse depth in [1e-3, 2].
  static PipelineConfig outdoor();
  // 2 pyramid levels, motion model off, inverse depth in [0.02, 5].
  static PipelineConfig indoor();
};

// Flat "key = value" text; '#' starts a comment. An optional "preset" key
// (outdoor | indoor) selects the base before the other keys apply. Unknown
// keys, malformed values, and duplicates throw std::runtime_error.
PipelineConfig parse_config(std::istream& in, const std::string& source = "config");
PipelineConfig load_config(const std::filesystem::path& path);

// Applies parsed pairs onto cfg; same error rules as parse_config.
void apply_config(PipelineConfig& cfg, const std::map<std::string, std::string>& kv,
                  const std::string& source = "config");

// Every key with its current value, one "key = value" per line.
std::string dump_config(const PipelineConfig& cfg);

// Shared key=value reader; duplicate keys throw.
std::map<std::string, std::string> read_key_values(std::istream& in, const std::string& source);

bool parse_bool(const std::string& s, const std::string& key);

}  // namespace densevo
