#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptforge/error.hpp"
#include "promptforge/log.hpp"
#include "promptforge/matching.hpp"
#include "promptforge/patching.hpp"
#include "promptforge/pipeline.hpp"
#include "promptforge/rng.hpp"
#include "promptforge/segmenter.hpp"
#include "promptforge/tensor_io.hpp"

namespace promptforge {

// ---------------------------------------------------------------------------
// Dice
// ---------------------------------------------------------------------------

/// 2|P & T| / (|P| + |T|); two empty masks score 1.
inline double dice(const MaskImage& pred, const MaskImage& truth) {
  if (pred.width != truth.width || pred.height != truth.height ||
      pred.data.size() != truth.data.size()) {
    throw Error(ErrorKind::DimensionMismatch, "dice: masks differ in size");
  }
  std::size_t inter = 0, p = 0, t = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] != 0;
    const bool b = truth.data[i] != 0;
    inter += a && b;
    p += a;
    t += b;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(p + t);
}

// ---------------------------------------------------------------------------
// Synthetic fixtures
// ---------------------------------------------------------------------------

struct ObjectShape {
  enum class Kind { Rectangle, Ellipse };

  Kind kind = Kind::Rectangle;
  double cx = 0, cy = 0;
  double rx = 0, ry = 0;  // half extents

  bool contains(int x, int y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    if (kind == Kind::Rectangle) return std::abs(dx) <= rx && std::abs(dy) <= ry;
    return (dx * dx) / (rx * rx) + (dy * dy) / (ry * ry) <= 1.0;
  }
};

/// One synthetic reference/target pair. Object patches draw features around an
/// "object" cluster center, all others around the "background" center; the
/// centers are `separation` apart and per-dimension noise has std `noise_sigma`.
struct SyntheticCase {
  std::uint64_t seed = 0;
  int width = 160;
  int height = 160;
  int patch_size = 16;
  int stride = 16;
  std::vector<ObjectShape> ref_objects;
  std::vector<ObjectShape> target_objects;
  std::size_t feature_dim = 16;
  double noise_sigma = 0.0;
  double separation = 1.0;
};

struct SyntheticFixture {
  FeatureMap ref;
  MaskImage ref_mask;
  FeatureMap target;
  MaskImage target_mask;
};

inline MaskImage rasterize(const std::vector<ObjectShape>& objects, int width, int height) {
  MaskImage mask(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (const auto& o : objects)
        if (o.contains(x, y)) {
          mask.at(x, y) = 1;
          break;
        }
  return mask;
}

namespace detail {

inline void check_objects(const std::vector<ObjectShape>& objects, int width, int height,
                          const char* which) {
  if (objects.empty()) throw Error(ErrorKind::DegenerateGeometry, std::string(which) + ": no objects");
  for (const auto& o : objects) {
    if (!(o.rx > 0 && o.ry > 0) || o.cx - o.rx <= 0 || o.cy - o.ry <= 0 ||
        o.cx + o.rx >= width - 1 || o.cy + o.ry >= height - 1) {
      throw Error(ErrorKind::DegenerateGeometry,
                  std::string(which) + ": object must be nonempty and strictly inside the image");
    }
  }
}

inline FeatureMap cluster_features(const PatchGrid& grid, const MaskImage& mask,
                                   const std::vector<float>& object_center, double sigma,
                                   DeterministicRng& rng) {
  const auto dim = object_center.size();
  FeatureMap map{grid, dim, std::vector<float>(grid.size() * dim, 0.0f)};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto c = patch_center(grid, i);
    const bool object = mask.at(c.x, c.y) != 0;
    for (std::size_t k = 0; k < dim; ++k) {
      double v = object ? object_center[k] : 0.0;
      if (sigma > 0.0) v += sigma * rng.normal();
      map.features[i * dim + k] = static_cast<float>(v);
    }
  }
  return map;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

inline SyntheticFixture generate_synthetic(const SyntheticCase& c) {
  if (c.feature_dim < 1) throw Error(ErrorKind::DegenerateGeometry, "feature_dim must be >= 1");
  if (!(c.noise_sigma >= 0.0) || !(c.separation > 0.0)) {
    throw Error(ErrorKind::DegenerateGeometry, "need noise_sigma >= 0 and separation > 0");
  }
  detail::check_objects(c.ref_objects, c.width, c.height, "reference");
  detail::check_objects(c.target_objects, c.width, c.height, "target");
  const auto grid = build_patch_grid(c.width, c.height, c.patch_size, c.stride);

  SyntheticFixture f;
  f.ref_mask = rasterize(c.ref_objects, c.width, c.height);
  f.target_mask = rasterize(c.target_objects, c.width, c.height);
  const auto labels = label_reference_patches(grid, f.ref_mask);
  const auto positives = std::count(labels.begin(), labels.end(), PatchLabel::Positive);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error(ErrorKind::DegenerateGeometry, "reference needs both object and background patches");
  }

  DeterministicRng rng(c.seed);
  std::vector<double> direction(c.feature_dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (auto& d : direction) {
      d = rng.normal();
      norm += d * d;
    }
    norm = std::sqrt(norm);
  }
  std::vector<float> object_center(c.feature_dim);
  for (std::size_t k = 0; k < c.feature_dim; ++k) {
    object_center[k] = static_cast<float>(c.separation * direction[k] / norm);
  }
  f.ref = detail::cluster_features(grid, f.ref_mask, object_center, c.noise_sigma, rng);
  f.target = detail::cluster_features(grid, f.target_mask, object_center, c.noise_sigma, rng);
  return f;
}

/// Parameters for a family of randomly placed synthetic cases.
struct SynthSpec {
  std::uint64_t seed = 7;
  std::size_t cases = 5;
  int width = 160;
  int height = 160;
  int patch_size = 16;
  int stride = 16;
  std::size_t feature_dim = 16;
  double separation = 1.0;
  // noise_sigma = noise_ratio * separation
  double noise_ratio = 0.0;
};

inline SyntheticCase make_synthetic_case(std::uint64_t seed, const SynthSpec& spec) {
  DeterministicRng rng(seed);
  auto random_object = [&] {
    ObjectShape o;
    o.kind = rng.uniform() < 0.5 ? ObjectShape::Kind::Rectangle : ObjectShape::Kind::Ellipse;
    o.rx = std::floor(rng.uniform(0.18, 0.32) * spec.width);
    o.ry = std::floor(rng.uniform(0.18, 0.32) * spec.height);
    o.cx = std::floor(rng.uniform(o.rx + 2.0, spec.width - o.rx - 3.0));
    o.cy = std::floor(rng.uniform(o.ry + 2.0, spec.height - o.ry - 3.0));
    return o;
  };
  SyntheticCase c;
  c.seed = detail::splitmix64(seed);
  c.width = spec.width;
  c.height = spec.height;
  c.patch_size = spec.patch_size;
  c.stride = spec.stride;
  c.feature_dim = spec.feature_dim;
  c.separation = spec.separation;
  c.noise_sigma = spec.noise_ratio * spec.separation;
  c.ref_objects = {random_object()};
  c.target_objects = {random_object()};
  return c;
}

inline std::vector<SyntheticCase> make_synthetic_suite(const SynthSpec& spec) {
  std::vector<SyntheticCase> out;
  out.reserve(spec.cases);
  for (std::size_t i = 0; i < spec.cases; ++i) {
    out.push_back(make_synthetic_case(detail::splitmix64(spec.seed ^ (0x51ed27u + i * 0x1000193u)), spec));
  }
  return out;
}

/// Grayscale stand-in image for a synthetic target (object bright, background dark).
inline GrayImage render_synthetic_image(const MaskImage& mask) {
  GrayImage image{mask.width, mask.height, std::vector<std::uint8_t>(mask.data.size())};
  for (std::size_t i = 0; i < mask.data.size(); ++i) image.data[i] = mask.data[i] ? 200 : 60;
  return image;
}

// ---------------------------------------------------------------------------
// Dataset manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::filesystem::path ref_features;
  std::filesystem::path ref_mask;
  std::filesystem::path target_features;
  std::optional<std::filesystem::path> target_image;
  std::filesystem::path target_mask;
};

/// JSON list of {ref_features, ref_mask, target_features, target_image?,
/// target_mask}; relative paths resolve against the manifest's directory.
inline std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    if (!j.is_array()) throw Error(ErrorKind::MalformedInput, "manifest must be a JSON list");
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto& e = j[i];
      auto resolve = [&](const char* key) { return base / e.at(key).get<std::string>(); };
      ManifestEntry entry;
      entry.id = e.contains("id") ? e["id"].get<std::string>() : "case" + std::to_string(i);
      entry.ref_features = resolve("ref_features");
      entry.ref_mask = resolve("ref_mask");
      entry.target_features = resolve("target_features");
      entry.target_mask = resolve("target_mask");
      if (e.contains("target_image") && !e["target_image"].is_null()) entry.target_image = resolve("target_image");
      out.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedInput, "manifest " + path.string() + ": " + e.what());
  }
  return out;
}

inline void save_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    return base.empty() ? p.generic_string() : p.lexically_relative(base).generic_string();
  };
  auto j = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json item;
    item["id"] = e.id;
    item["ref_features"] = rel(e.ref_features);
    item["ref_mask"] = rel(e.ref_mask);
    item["target_features"] = rel(e.target_features);
    if (e.target_image) item["target_image"] = rel(*e.target_image);
    item["target_mask"] = rel(e.target_mask);
    j.push_back(std::move(item));
  }
  detail::write_file_bytes(path, j.dump(2) + "\n");
}

/// Writes a synthetic fixture set plus its manifest into `out_dir`.
inline std::vector<ManifestEntry> write_synthetic_suite(const std::vector<SyntheticCase>& cases,
                                                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "case%03zu", i);
    const auto f = generate_synthetic(cases[i]);
    ManifestEntry e{id,
                    out_dir / (std::string(id) + "_ref.fpt"),
                    out_dir / (std::string(id) + "_ref_mask.pgm"),
                    out_dir / (std::string(id) + "_target.fpt"),
                    out_dir / (std::string(id) + "_target.pgm"),
                    out_dir / (std::string(id) + "_target_mask.pgm")};
    save_feature_map(f.ref, e.ref_features);
    save_mask(f.ref_mask, e.ref_mask);
    save_feature_map(f.target, e.target_features);
    save_gray(render_synthetic_image(f.target_mask), *e.target_image);
    save_mask(f.target_mask, e.target_mask);
    entries.push_back(std::move(e));
  }
  save_manifest(entries, out_dir / "manifest.json");
  return entries;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepConfig {
  std::string id;
  PipelineConfig config;
};

struct NamedSegmenter {
  std::string tag;
  Segmenter segmenter;
};

using CaseSource = std::variant<SyntheticCase, ManifestEntry>;

/// A case made concrete for one config (grids depend on patch size and stride).
struct EvalCase {
  std::string id;
  FeatureMap ref;
  MaskImage ref_mask;
  FeatureMap target;
  MaskImage target_mask;
  std::filesystem::path target_image;
};

inline std::string case_id(const CaseSource& source, std::size_t index) {
  if (const auto* e = std::get_if<ManifestEntry>(&source)) return e->id;
  return "synth" + std::to_string(index);
}

inline EvalCase materialize(const CaseSource& source, const PipelineConfig& config, std::size_t index) {
  if (const auto* synth = std::get_if<SyntheticCase>(&source)) {
    auto c = *synth;
    c.patch_size = config.patch_size;
    c.stride = config.stride;
    auto f = generate_synthetic(c);
    return {case_id(source, index), std::move(f.ref), std::move(f.ref_mask),
            std::move(f.target), std::move(f.target_mask), {}};
  }
  const auto& e = std::get<ManifestEntry>(source);
  EvalCase out;
  out.id = e.id;
  out.ref_mask = load_mask(e.ref_mask);
  out.target_mask = load_mask(e.target_mask);
  out.ref = load_feature_map(e.ref_features, std::pair{out.ref_mask.width, out.ref_mask.height},
                             config.patch_size, config.stride);
  out.target = load_feature_map(e.target_features,
                                std::pair{out.target_mask.width, out.target_mask.height},
                                config.patch_size, config.stride);
  if (e.target_image) out.target_image = *e.target_image;
  return out;
}

struct EvalRecord {
  std::string config_id;
  std::string segmenter_tag;
  std::vector<std::string> case_ids;  // successful cases, in case order
  std::vector<double> dsc;            // per successful case
  double mean = 0.0;                  // arithmetic mean of dsc (0 when empty)
  std::vector<std::string> failures;  // "<case>: <message>"
};

struct SweepResult {
  std::vector<SweepConfig> grid;
  std::vector<std::string> segmenter_tags;
  std::vector<EvalRecord> records;  // config-major, one per (config, segmenter)

  const EvalRecord& at(std::size_t config, std::size_t segmenter) const {
    return records[config * segmenter_tags.size() + segmenter];
  }

  std::size_t successes() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.dsc.size();
    return n;
  }
};

/// Runs pipeline + segmentation + Dice for every (config, case, segmenter).
/// Cases run on up to `jobs` threads; results are ordered by config then case.
/// A failing case is recorded and the sweep carries on.
inline SweepResult sweep(const std::vector<SweepConfig>& grid, const std::vector<CaseSource>& cases,
                         const std::vector<NamedSegmenter>& segmenters, unsigned jobs = 1) {
  if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "sweep grid is empty");
  if (cases.empty()) throw Error(ErrorKind::InvalidArgument, "sweep has no cases");
  if (segmenters.empty()) throw Error(ErrorKind::InvalidArgument, "sweep has no segmenter");

  struct Outcome {
    std::string case_id;
    std::vector<std::optional<double>> dsc;
    std::vector<std::string> error;
  };
  const std::size_t total = grid.size() * cases.size();
  std::vector<Outcome> outcomes(total);

  auto run_one = [&](std::size_t task) {
    const auto ci = task / cases.size();
    const auto ki = task % cases.size();
    auto& out = outcomes[task];
    out.dsc.assign(segmenters.size(), std::nullopt);
    out.error.assign(segmenters.size(), {});
    out.case_id = case_id(cases[ki], ki);
    try {
      const auto ec = materialize(cases[ki], grid[ci].config, ki);
      const auto run = run_pipeline(ec.ref, ec.ref_mask, ec.target, ec.target_mask.width,
                                    ec.target_mask.height, grid[ci].config);
      for (std::size_t s = 0; s < segmenters.size(); ++s) {
        try {
          const auto pred = segmenters[s].segmenter.segment(run.scheme, ec.target_image);
          out.dsc[s] = dice(pred, ec.target_mask);
        } catch (const std::exception& e) {
          out.error[s] = e.what();
        }
      }
    } catch (const std::exception& e) {
      for (auto& msg : out.error) msg = e.what();
    }
  };

  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(total)));
  if (jobs == 1) {
    for (std::size_t t = 0; t < total; ++t) run_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (auto t = next.fetch_add(1); t < total; t = next.fetch_add(1)) run_one(t);
      });
    }
  }

  SweepResult result{grid, {}, {}};
  for (const auto& s : segmenters) result.segmenter_tags.push_back(s.tag);
  for (std::size_t ci = 0; ci < grid.size(); ++ci) {
    for (std::size_t s = 0; s < segmenters.size(); ++s) {
      EvalRecord rec{grid[ci].id, segmenters[s].tag, {}, {}, 0.0, {}};
      for (std::size_t ki = 0; ki < cases.size(); ++ki) {
        const auto& o = outcomes[ci * cases.size() + ki];
        if (o.dsc[s]) {
          rec.case_ids.push_back(o.case_id);
          rec.dsc.push_back(*o.dsc[s]);
        } else {
          rec.failures.push_back(o.case_id + ": " + o.error[s]);
          log::info("sweep " + grid[ci].id + " / " + o.case_id + " failed: " + o.error[s]);
        }
      }
      if (!rec.dsc.empty()) {
        rec.mean = std::accumulate(rec.dsc.begin(), rec.dsc.end(), 0.0) /
                   static_cast<double>(rec.dsc.size());
      }
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

/// "0" for zero, otherwise a percentage with two decimals ("12.50%").
inline std::string format_percent(double fraction) {
  if (fraction == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", fraction * 100.0);
  return buf;
}

inline std::string format_dsc(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", value);
  return buf;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace detail

/// Hyperparameter columns, one DSC column per segmenter, then the average.
inline std::string sweep_csv(const SweepResult& r) {
  std::string out =
      "config_id,stages,d_exclusive,d_sparse_positive,d_sparse_negative,negative_composition";
  for (const auto& tag : r.segmenter_tags) out += "," + detail::csv_field("dsc_" + tag);
  out += ",ave,cases_ok,cases_failed,notes\n";
  for (std::size_t ci = 0; ci < r.grid.size(); ++ci) {
    const auto& c = r.grid[ci].config;
    out += detail::csv_field(r.grid[ci].id) + "," + detail::csv_field(stages_to_string(c.stages)) +
           "," + format_percent(c.d_exclusive.fraction) + "," +
           format_percent(c.d_sparse_positive.fraction) + "," +
           format_percent(c.d_sparse_negative.fraction) + "," +
           std::string(to_string(c.negative_composition));
    double sum = 0.0;
    std::size_t scored = 0, ok = 0, failed = 0;
    std::string notes;
    for (std::size_t s = 0; s < r.segmenter_tags.size(); ++s) {
      const auto& rec = r.at(ci, s);
      if (rec.dsc.empty()) {
        out += ",";
      } else {
        out += "," + format_dsc(rec.mean);
        sum += rec.mean;
        ++scored;
      }
      ok += rec.dsc.size();
      failed += rec.failures.size();
      for (const auto& f : rec.failures) notes += (notes.empty() ? "" : "; ") + rec.segmenter_tag + " " + f;
    }
    out += "," + (scored ? format_dsc(sum / static_cast<double>(scored)) : std::string());
    out += "," + std::to_string(ok) + "," + std::to_string(failed) + "," + detail::csv_field(notes) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// Grid file: "[id]" sections of key=value lines. Keys before the first section
/// apply to every config.
inline std::vector<SweepConfig> parse_grid(std::string_view text) {
  PipelineConfig defaults;
  std::vector<SweepConfig> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = detail::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw Error(ErrorKind::InvalidConfig, "grid line " + std::to_string(line_no) + ": bad section header");
      }
      out.push_back({std::string(line.substr(1, line.size() - 2)), defaults});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::InvalidConfig, "grid line " + std::to_string(line_no) + ": expected key=value");
    }
    auto& target = out.empty() ? defaults : out.back().config;
    apply_config_entry(target, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  if (out.empty()) throw Error(ErrorKind::InvalidConfig, "grid defines no configs");
  return out;
}

inline std::vector<SweepConfig> load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open grid " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_grid(buffer.str());
}

/// Cumulative stage sets: F, F+B, F+B+E, F+B+E+S, F+B+E+S+H.
inline std::vector<SweepConfig> ablation_grid() {
  std::vector<SweepConfig> out;
  const char* ids[] = {"F", "F+B", "F+B+E", "F+B+E+S", "F+B+E+S+H"};
  for (int k = 0; k < 5; ++k) {
    PipelineConfig c;
    c.stages = {true, k >= 1, k >= 2, k >= 3, k >= 4};
    out.push_back({ids[k], c});
  }
  return out;
}

inline std::vector<SweepConfig> exclusive_radius_grid() {
  std::vector<SweepConfig> out;
  for (double f : {0.5, 0.25, 0.125, 0.0}) {
    PipelineConfig c;
    c.d_exclusive.fraction = f;
    out.push_back({"d_exclusive=" + format_percent(f), c});
  }
  return out;
}

inline std::vector<SweepConfig> sparse_radius_grid() {
  const std::pair<double, double> rows[] = {{0, 0},     {0.0625, 0}, {0.125, 0}, {0.25, 0},
                                            {0, 0.0625}, {0, 0.125},  {0, 0.25}};
  std::vector<SweepConfig> out;
  for (const auto& [p, n] : rows) {
    PipelineConfig c;
    c.d_sparse_positive.fraction = p;
    c.d_sparse_negative.fraction = n;
    out.push_back({"d_sparse=" + format_percent(p) + "/" + format_percent(n), c});
  }
  return out;
}

inline std::vector<SweepConfig> negative_composition_grid() {
  std::vector<SweepConfig> out;
  const std::pair<const char*, NegativeComposition> rows[] = {
      {"Background only", NegativeComposition::BackgroundOnly},
      {"Hard only", NegativeComposition::HardOnly},
      {"Background w Hard", NegativeComposition::BackgroundWithHard}};
  for (const auto& [id, comp] : rows) {
    PipelineConfig c;
    c.negative_composition = comp;
    out.push_back({id, c});
  }
  return out;
}

/// "builtin:<name>" grids; std::nullopt for unknown names.
inline std::optional<std::vector<SweepConfig>> builtin_grid(std::string_view name) {
  if (name == "ablation") return ablation_grid();
  if (name == "exclusive") return exclusive_radius_grid();
  if (name == "sparse") return sparse_radius_grid();
  if (name == "negative") return negative_composition_grid();
  return std::nullopt;
}

}  // namespace promptforge
