#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptforge/error.hpp"
#include "promptforge/log.hpp"
#include "promptforge/matching.hpp"
#include "promptforge/patching.hpp"
#include "promptforge/prompt.hpp"
#include "promptforge/spatial_sampling.hpp"
#include "promptforge/tensor_io.hpp"

namespace promptforge {

/// Which negatives reach the segmenter.
enum class NegativeComposition { BackgroundOnly, HardOnly, BackgroundWithHard };

struct StageFlags {
  bool forward = true;
  bool backward = true;
  bool exclusive = true;
  bool sparse = true;
  bool hard = true;

  friend bool operator==(const StageFlags&, const StageFlags&) = default;
};

struct PipelineConfig {
  int patch_size = 16;
  int stride = 16;
  RadiusSpec d_exclusive{0.25};
  RadiusSpec d_sparse_positive{0.0};
  RadiusSpec d_sparse_negative{0.125};
  StageFlags stages;
  NegativeComposition negative_composition = NegativeComposition::BackgroundWithHard;
  HardMeanScope hard_mean_scope = HardMeanScope::PositiveExcludedOnly;
  RadiusBase radius_base = RadiusBase::Min;
  // Re-run negative sparsification after hard negatives are merged.
  bool sparsify_hard = false;
  // Row-at-a-time matching instead of a dense matrix.
  bool streaming = false;
};

struct ConfigViolation {
  std::string field;
  std::string rule;

  friend bool operator==(const ConfigViolation&, const ConfigViolation&) = default;
};

inline std::vector<ConfigViolation> validate_config(const PipelineConfig& config) {
  std::vector<ConfigViolation> out;
  if (config.patch_size < 1) out.push_back({"patch_size", "must be >= 1"});
  if (config.stride < 1 || config.stride > config.patch_size) {
    out.push_back({"stride", "must satisfy 1 <= stride <= patch_size"});
  }
  const std::pair<const char*, RadiusSpec> radii[] = {
      {"d_exclusive", config.d_exclusive},
      {"d_sparse_positive", config.d_sparse_positive},
      {"d_sparse_negative", config.d_sparse_negative}};
  for (const auto& [name, spec] : radii) {
    if (!spec.valid()) out.push_back({name, "fraction must lie in [0, 1]"});
  }
  if (!config.stages.forward) out.push_back({"stages.forward", "forward matching is mandatory"});
  if (!config.stages.backward) {
    if (config.stages.exclusive) out.push_back({"stages.exclusive", "requires stages.backward"});
    if (config.stages.sparse) out.push_back({"stages.sparse", "requires stages.backward"});
    if (config.stages.hard) out.push_back({"stages.hard", "requires stages.backward"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// key=value config files
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline int parse_int(std::string_view key, std::string_view value) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorKind::InvalidConfig, std::string(key) + ": expected integer, got '" +
                                              std::string(value) + "'");
  }
  return out;
}

inline double parse_fraction(std::string_view key, std::string_view value) {
  // std::from_chars for double is locale-independent and always uses '.'.
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorKind::InvalidConfig, std::string(key) + ": expected decimal, got '" +
                                              std::string(value) + "'");
  }
  return out;
}

inline bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error(ErrorKind::InvalidConfig, std::string(key) + ": expected true/false");
}

inline std::string format_fraction(double value) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << value;
  return os.str();
}

}  // namespace detail

inline std::string_view to_string(NegativeComposition c) {
  switch (c) {
    case NegativeComposition::BackgroundOnly: return "BackgroundOnly";
    case NegativeComposition::HardOnly: return "HardOnly";
    case NegativeComposition::BackgroundWithHard: return "BackgroundWithHard";
  }
  return "?";
}

inline std::string_view to_string(HardMeanScope s) {
  return s == HardMeanScope::AllExcluded ? "AllExcluded" : "PositiveExcludedOnly";
}

inline std::string_view to_string(RadiusBase b) {
  switch (b) {
    case RadiusBase::Min: return "min";
    case RadiusBase::Max: return "max";
    case RadiusBase::GeometricMean: return "geomean";
  }
  return "?";
}

inline std::string stages_to_string(const StageFlags& s) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(s.forward, "forward");
  add(s.backward, "backward");
  add(s.exclusive, "exclusive");
  add(s.sparse, "sparse");
  add(s.hard, "hard");
  return out;
}

inline StageFlags parse_stages(std::string_view value) {
  StageFlags s{false, false, false, false, false};
  while (!value.empty()) {
    const auto comma = value.find(',');
    const auto name = detail::trim(value.substr(0, comma));
    if (name == "forward") s.forward = true;
    else if (name == "backward") s.backward = true;
    else if (name == "exclusive") s.exclusive = true;
    else if (name == "sparse") s.sparse = true;
    else if (name == "hard") s.hard = true;
    else if (!name.empty()) {
      throw Error(ErrorKind::InvalidConfig, "stages: unknown stage '" + std::string(name) + "'");
    }
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return s;
}

/// Applies one key=value assignment. Unknown keys are errors.
inline void apply_config_entry(PipelineConfig& config, std::string_view key,
                               std::string_view value) {
  if (key == "patch_size") config.patch_size = detail::parse_int(key, value);
  else if (key == "stride") config.stride = detail::parse_int(key, value);
  else if (key == "d_exclusive") config.d_exclusive.fraction = detail::parse_fraction(key, value);
  else if (key == "d_sparse_positive")
    config.d_sparse_positive.fraction = detail::parse_fraction(key, value);
  else if (key == "d_sparse_negative")
    config.d_sparse_negative.fraction = detail::parse_fraction(key, value);
  else if (key == "stages") config.stages = parse_stages(value);
  else if (key == "negative_composition") {
    if (value == "BackgroundOnly") config.negative_composition = NegativeComposition::BackgroundOnly;
    else if (value == "HardOnly") config.negative_composition = NegativeComposition::HardOnly;
    else if (value == "BackgroundWithHard")
      config.negative_composition = NegativeComposition::BackgroundWithHard;
    else throw Error(ErrorKind::InvalidConfig, "negative_composition: unknown value");
  } else if (key == "hard_mean_scope") {
    if (value == "PositiveExcludedOnly") config.hard_mean_scope = HardMeanScope::PositiveExcludedOnly;
    else if (value == "AllExcluded") config.hard_mean_scope = HardMeanScope::AllExcluded;
    else throw Error(ErrorKind::InvalidConfig, "hard_mean_scope: unknown value");
  } else if (key == "radius_base") {
    if (value == "min") config.radius_base = RadiusBase::Min;
    else if (value == "max") config.radius_base = RadiusBase::Max;
    else if (value == "geomean") config.radius_base = RadiusBase::GeometricMean;
    else throw Error(ErrorKind::InvalidConfig, "radius_base: expected min|max|geomean");
  } else if (key == "sparsify_hard") config.sparsify_hard = detail::parse_bool(key, value);
  else if (key == "streaming") config.streaming = detail::parse_bool(key, value);
  else throw Error(ErrorKind::InvalidConfig, "unknown key '" + std::string(key) + "'");
}

/// Parses key=value lines on top of `base`. Blank lines and '#' comments are skipped.
inline PipelineConfig parse_config(std::string_view text, PipelineConfig base = {}) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = detail::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidConfig, "line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_config_entry(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

inline std::string format_config(const PipelineConfig& c) {
  std::string out;
  out += "patch_size=" + std::to_string(c.patch_size) + "\n";
  out += "stride=" + std::to_string(c.stride) + "\n";
  out += "d_exclusive=" + detail::format_fraction(c.d_exclusive.fraction) + "\n";
  out += "d_sparse_positive=" + detail::format_fraction(c.d_sparse_positive.fraction) + "\n";
  out += "d_sparse_negative=" + detail::format_fraction(c.d_sparse_negative.fraction) + "\n";
  out += "stages=" + stages_to_string(c.stages) + "\n";
  out += "negative_composition=" + std::string(to_string(c.negative_composition)) + "\n";
  out += "hard_mean_scope=" + std::string(to_string(c.hard_mean_scope)) + "\n";
  out += "radius_base=" + std::string(to_string(c.radius_base)) + "\n";
  out += std::string("sparsify_hard=") + (c.sparsify_hard ? "true" : "false") + "\n";
  out += std::string("streaming=") + (c.streaming ? "true" : "false") + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

struct StageRecord {
  std::string stage;
  std::vector<PromptPoint> removed;
  std::vector<PromptPoint> points_after;

  std::size_t kept() const { return points_after.size(); }
};

struct PipelineTrace {
  std::vector<StageRecord> stages;
  // Hard-negative points harvested from backward matching, before merging.
  std::vector<PromptPoint> hard_candidates;

  const StageRecord* find(std::string_view name) const {
    for (const auto& s : stages)
      if (s.stage == name) return &s;
    return nullptr;
  }
};

struct PipelineResult {
  PromptScheme scheme;
  PipelineTrace trace;
};

inline nlohmann::json point_to_json(const PromptPoint& p) {
  return nlohmann::json::array({p.x, p.y, std::string(to_string(p.cls))});
}

inline nlohmann::json trace_to_json(const PipelineTrace& trace) {
  auto arr = nlohmann::json::array();
  for (const auto& s : trace.stages) {
    nlohmann::json rec;
    rec["stage"] = s.stage;
    rec["kept"] = s.kept();
    auto removed = nlohmann::json::array();
    for (const auto& p : s.removed) removed.push_back(point_to_json(p));
    rec["removed"] = std::move(removed);
    auto after = nlohmann::json::array();
    for (const auto& p : s.points_after) after.push_back(point_to_json(p));
    rec["points_after"] = std::move(after);
    arr.push_back(std::move(rec));
  }
  return arr;
}

namespace detail {

inline PromptScheme candidates_to_scheme(const PatchGrid& target_grid,
                                         std::span<const CandidatePrompt> candidates,
                                         int width, int height) {
  PromptScheme scheme{width, height, {}};
  for (const auto& c : candidates) {
    const auto center = patch_center(target_grid, c.target_patch);
    scheme.add({center.x, center.y, c.label});
  }
  return scheme;
}

inline void record_stage(PipelineTrace& trace, std::string name, const PromptScheme& before,
                         const PromptScheme& after) {
  StageRecord rec{std::move(name), {}, after.points};
  for (const auto& p : before.points) {
    if (!after.contains(p.x, p.y, p.cls)) rec.removed.push_back(p);
  }
  trace.stages.push_back(std::move(rec));
}

inline void check_pipeline_inputs(const FeatureMap& ref, const MaskImage& ref_mask,
                                  const FeatureMap& target, int target_width, int target_height,
                                  const PipelineConfig& config) {
  const auto violations = validate_config(config);
  if (!violations.empty()) {
    std::string msg;
    for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v.field + ": " + v.rule;
    throw Error(ErrorKind::InvalidConfig, msg);
  }
  if (ref_mask.width != ref.grid.image_width || ref_mask.height != ref.grid.image_height) {
    throw Error(ErrorKind::DimensionMismatch, "reference mask does not match reference grid");
  }
  if (target.grid.image_width != target_width || target.grid.image_height != target_height) {
    throw Error(ErrorKind::DimensionMismatch, "target size does not match target grid");
  }
  detail::check_matchable(ref, target);
}

}  // namespace detail

/// Reference features + mask and target features -> prompt scheme for the
/// target. Stages run in the fixed order forward, backward, exclusive, sparse,
/// hard; disabled stages are skipped and the trace records every stage run.
inline PipelineResult run_pipeline(const FeatureMap& ref, const MaskImage& ref_mask,
                                   const FeatureMap& target, int target_width,
                                   int target_height, const PipelineConfig& config) {
  detail::check_pipeline_inputs(ref, ref_mask, target, target_width, target_height, config);

  const auto labels = label_reference_patches(ref.grid, ref_mask);
  std::vector<CandidatePrompt> forward;
  ColumnMinima columns;
  if (config.streaming) {
    auto streamed = streaming_match(ref, target, labels);
    forward = std::move(streamed.forward);
    columns = std::move(streamed.columns);
  } else {
    const auto matrix = correspondence_matrix(ref, target);
    forward = forward_match(matrix, labels);
    if (config.stages.backward) columns = column_minima(matrix);
  }

  PipelineResult result;
  auto& trace = result.trace;
  const PromptScheme empty{target_width, target_height, {}};
  PromptScheme scheme = detail::candidates_to_scheme(target.grid, forward, target_width, target_height);
  detail::record_stage(trace, "forward", empty, scheme);
  log::debug("forward: " + std::to_string(scheme.points.size()) + " points");

  std::vector<PromptPoint> hard_points;
  if (config.stages.backward) {
    const auto split = backward_match(columns, forward, labels);
    auto next = detail::candidates_to_scheme(target.grid, split.retained, target_width, target_height);
    detail::record_stage(trace, "backward", scheme, next);
    scheme = std::move(next);
    if (config.stages.hard) {
      const auto hard = select_hard_negatives(split.excluded, config.hard_mean_scope);
      const auto hard_scheme = detail::candidates_to_scheme(target.grid, hard, target_width, target_height);
      hard_points = hard_scheme.points;
      trace.hard_candidates = hard_points;
    }
  }

  const double r_exclusive =
      resolve_radius(config.d_exclusive, target_width, target_height, config.radius_base);
  const double r_sparse_neg =
      resolve_radius(config.d_sparse_negative, target_width, target_height, config.radius_base);

  if (config.stages.exclusive) {
    auto next = exclusive_sampling(scheme, r_exclusive);
    detail::record_stage(trace, "exclusive", scheme, next);
    scheme = std::move(next);
  }

  if (config.stages.sparse) {
    const double r_sparse_pos =
        resolve_radius(config.d_sparse_positive, target_width, target_height, config.radius_base);
    auto next = sparse_sampling(scheme, PromptClass::Positive, r_sparse_pos);
    next = sparse_sampling(next, PromptClass::Negative, r_sparse_neg);
    detail::record_stage(trace, "sparse", scheme, next);
    scheme = std::move(next);
  }

  if (config.stages.hard && config.negative_composition != NegativeComposition::BackgroundOnly) {
    const double radius = config.stages.exclusive ? r_exclusive : 0.0;
    auto next = merge_hard_negatives(scheme, hard_points, radius);
    if (config.sparsify_hard && config.stages.sparse) {
      next = sparse_sampling(next, PromptClass::Negative, r_sparse_neg);
    }
    detail::record_stage(trace, "hard", scheme, next);
    scheme = std::move(next);
  }

  if (config.negative_composition != NegativeComposition::BackgroundWithHard) {
    const auto drop = config.negative_composition == NegativeComposition::BackgroundOnly
                          ? PromptClass::HardNegative
                          : PromptClass::Negative;
    PromptScheme next{scheme.image_width, scheme.image_height, {}};
    for (const auto& p : scheme.points)
      if (p.cls != drop) next.points.push_back(p);
    detail::record_stage(trace, "composition", scheme, next);
    scheme = std::move(next);
  }

  result.scheme = std::move(scheme);
  return result;
}

}  // namespace promptforge
