#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <utility>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptforge/error.hpp"
#include "promptforge/patching.hpp"
#include "promptforge/prompt.hpp"
#include "promptforge/tensor_io.hpp"

namespace promptforge {

/// Per-patch embeddings of one image, one row per grid cell in row-major order.
struct FeatureMap {
  PatchGrid grid;
  std::size_t feature_dim = 0;
  std::vector<float> features;

  std::size_t num_patches() const { return grid.size(); }

  std::span<const float> row(std::size_t patch) const {
    return {features.data() + patch * feature_dim, feature_dim};
  }
};

/// Wraps a loaded tensor as a feature map over `grid`. Rank-2 tensors must have
/// grid.size() rows; rank-3 tensors must match the grid's rows and cols.
inline FeatureMap make_feature_map(const TensorFile& tensor, const PatchGrid& grid) {
  std::size_t patches = 0;
  std::size_t dim = 0;
  if (tensor.rank() == 2) {
    patches = tensor.shape[0];
    dim = tensor.shape[1];
  } else if (tensor.rank() == 3) {
    if (tensor.shape[0] != static_cast<std::size_t>(grid.rows) ||
        tensor.shape[1] != static_cast<std::size_t>(grid.cols)) {
      throw Error(ErrorKind::DimensionMismatch,
                  "feature grid " + std::to_string(tensor.shape[0]) + "x" +
                      std::to_string(tensor.shape[1]) + " vs patch grid " +
                      std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
    }
    patches = tensor.shape[0] * tensor.shape[1];
    dim = tensor.shape[2];
  } else {
    throw Error(ErrorKind::InvalidArgument, "feature tensor must have rank 2 or 3");
  }
  if (patches != grid.size()) {
    throw Error(ErrorKind::DimensionMismatch, "feature rows " + std::to_string(patches) +
                                                  " vs grid patches " +
                                                  std::to_string(grid.size()));
  }
  if (dim == 0) throw Error(ErrorKind::InvalidArgument, "feature_dim must be >= 1");
  return FeatureMap{grid, dim, tensor.data};
}

/// Dense reference x target matrix of Euclidean feature distances.
struct CorrespondenceMatrix {
  std::size_t rows = 0;  // reference patches
  std::size_t cols = 0;  // target patches
  std::vector<float> values;

  float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

  CorrespondenceMatrix transpose() const {
    CorrespondenceMatrix t{cols, rows, std::vector<float>(values.size())};
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) t.values[j * rows + i] = values[i * cols + j];
    return t;
  }
};

/// One prompt proposal: a target patch reached from a reference patch.
/// `distance` is always values[source_ref_patch][target_patch].
struct CandidatePrompt {
  std::size_t target_patch = 0;
  PromptClass label = PromptClass::Positive;
  std::size_t source_ref_patch = 0;
  float distance = 0.0f;

  friend bool operator==(const CandidatePrompt&, const CandidatePrompt&) = default;
};

namespace detail {

// Per-element differences in float, reduction in double.
inline float feature_distance(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const float d = a[k] - b[k];
    sum += static_cast<double>(d * d);
  }
  return static_cast<float>(std::sqrt(sum));
}

inline void check_matchable(const FeatureMap& ref, const FeatureMap& target) {
  if (ref.num_patches() == 0 || target.num_patches() == 0) {
    throw Error(ErrorKind::InvalidArgument, "empty feature map");
  }
  if (ref.feature_dim == 0 || ref.feature_dim != target.feature_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "feature_dim mismatch: " + std::to_string(ref.feature_dim) + " vs " +
                    std::to_string(target.feature_dim));
  }
  if (ref.features.size() != ref.num_patches() * ref.feature_dim ||
      target.features.size() != target.num_patches() * target.feature_dim) {
    throw Error(ErrorKind::DimensionMismatch, "feature buffer size does not match grid");
  }
}

// First index of the minimum; ties go to the lowest index.
inline std::size_t argmin(std::span<const float> values) {
  return static_cast<std::size_t>(std::min_element(values.begin(), values.end()) -
                                  values.begin());
}

}  // namespace detail

/// Writes distances from reference patch `ref_patch` to every target patch.
inline void correspondence_row(const FeatureMap& ref, const FeatureMap& target,
                               std::size_t ref_patch, std::span<float> out) {
  const auto a = ref.row(ref_patch);
  for (std::size_t j = 0; j < target.num_patches(); ++j) {
    out[j] = detail::feature_distance(a, target.row(j));
  }
}

inline CorrespondenceMatrix correspondence_matrix(const FeatureMap& ref, const FeatureMap& target,
                                                  unsigned threads = 1) {
  detail::check_matchable(ref, target);
  const std::size_t n = ref.num_patches();
  const std::size_t m = target.num_patches();
  CorrespondenceMatrix result{n, m, std::vector<float>(n * m)};
  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      correspondence_row(ref, target, i, {result.values.data() + i * m, m});
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    fill_rows(0, n);
    return result;
  }
  std::vector<std::jthread> workers;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    workers.emplace_back(fill_rows, begin, std::min(n, begin + chunk));
  }
  return result;
}

/// Each reference patch proposes its nearest target patch, carrying its label.
inline std::vector<CandidatePrompt> forward_match(const CorrespondenceMatrix& m,
                                                  std::span<const PatchLabel> ref_labels) {
  if (ref_labels.size() != m.rows) {
    throw Error(ErrorKind::DimensionMismatch, "ref_labels length " +
                                                  std::to_string(ref_labels.size()) +
                                                  " vs matrix rows " + std::to_string(m.rows));
  }
  std::vector<CandidatePrompt> out;
  out.reserve(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto j = detail::argmin(m.row(i));
    out.push_back({j, to_prompt_class(ref_labels[i]), i, m.at(i, j)});
  }
  return out;
}

/// Nearest reference patch for each target patch (lowest index on ties).
struct ColumnMinima {
  std::vector<std::size_t> argmin;
  std::vector<float> minimum;
};

inline ColumnMinima column_minima(const CorrespondenceMatrix& m) {
  ColumnMinima cm{std::vector<std::size_t>(m.cols, 0),
                  std::vector<float>(m.cols, std::numeric_limits<float>::infinity())};
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (m.at(i, j) < cm.minimum[j]) {
        cm.minimum[j] = m.at(i, j);
        cm.argmin[j] = i;
      }
    }
  }
  return cm;
}

struct BackwardResult {
  std::vector<CandidatePrompt> retained;
  std::vector<CandidatePrompt> excluded;
};

/// A candidate survives when its target patch maps back to a reference patch of
/// the same label. Excluded candidates are re-anchored on that nearest reference
/// patch, so their distance is the column minimum.
inline BackwardResult backward_match(const ColumnMinima& columns,
                                     std::span<const CandidatePrompt> candidates,
                                     std::span<const PatchLabel> ref_labels) {
  BackwardResult result;
  for (const auto& c : candidates) {
    if (c.target_patch >= columns.argmin.size()) {
      throw Error(ErrorKind::OutOfRange, "candidate target patch outside matrix");
    }
    const auto back = columns.argmin[c.target_patch];
    if (back >= ref_labels.size()) {
      throw Error(ErrorKind::DimensionMismatch, "ref_labels shorter than matrix rows");
    }
    if (to_prompt_class(ref_labels[back]) == c.label) {
      result.retained.push_back(c);
    } else {
      result.excluded.push_back({c.target_patch, c.label, back, columns.minimum[c.target_patch]});
    }
  }
  return result;
}

inline BackwardResult backward_match(const CorrespondenceMatrix& m,
                                     std::span<const CandidatePrompt> candidates,
                                     std::span<const PatchLabel> ref_labels) {
  if (ref_labels.size() != m.rows) {
    throw Error(ErrorKind::DimensionMismatch, "ref_labels length does not match matrix rows");
  }
  return backward_match(column_minima(m), candidates, ref_labels);
}

/// Which excluded candidates form the mean that hard negatives must beat.
enum class HardMeanScope { PositiveExcludedOnly, AllExcluded };

/// Positive-labeled exclusions whose correspondence is stronger (distance
/// strictly lower) than the mean, relabeled HardNegative.
inline std::vector<CandidatePrompt> select_hard_negatives(
    std::span<const CandidatePrompt> excluded,
    HardMeanScope scope = HardMeanScope::PositiveExcludedOnly) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : excluded) {
    if (scope == HardMeanScope::AllExcluded || c.label == PromptClass::Positive) {
      sum += c.distance;
      ++n;
    }
  }
  std::vector<CandidatePrompt> out;
  if (n == 0) return out;
  const double mean = sum / static_cast<double>(n);
  for (const auto& c : excluded) {
    if (c.label == PromptClass::Positive && static_cast<double>(c.distance) < mean) {
      out.push_back({c.target_patch, PromptClass::HardNegative, c.source_ref_patch, c.distance});
    }
  }
  return out;
}

/// Forward candidates and column minima computed one reference row at a time,
/// without materializing the full matrix.
struct StreamingMatch {
  std::vector<CandidatePrompt> forward;
  ColumnMinima columns;
};

inline StreamingMatch streaming_match(const FeatureMap& ref, const FeatureMap& target,
                                      std::span<const PatchLabel> ref_labels) {
  detail::check_matchable(ref, target);
  if (ref_labels.size() != ref.num_patches()) {
    throw Error(ErrorKind::DimensionMismatch, "ref_labels length does not match ref patches");
  }
  const std::size_t m = target.num_patches();
  StreamingMatch out;
  out.forward.reserve(ref.num_patches());
  out.columns = {std::vector<std::size_t>(m, 0),
                 std::vector<float>(m, std::numeric_limits<float>::infinity())};
  std::vector<float> row(m);
  for (std::size_t i = 0; i < ref.num_patches(); ++i) {
    correspondence_row(ref, target, i, row);
    const auto j = detail::argmin(row);
    out.forward.push_back({j, to_prompt_class(ref_labels[i]), i, row[j]});
    for (std::size_t k = 0; k < m; ++k) {
      if (row[k] < out.columns.minimum[k]) {
        out.columns.minimum[k] = row[k];
        out.columns.argmin[k] = i;
      }
    }
  }
  return out;
}

}  // namespace promptforge

namespace promptforge {

/// Optional grid description written next to a feature file as
/// `<features>.grid.json`; when present it overrides the configured grid.
inline std::optional<PatchGrid> load_grid_sidecar(const std::filesystem::path& features_path) {
  auto sidecar = features_path;
  sidecar += ".grid.json";
  if (!std::filesystem::exists(sidecar)) return std::nullopt;
  const auto bytes = detail::read_file_bytes(sidecar);
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    PatchGrid grid = build_patch_grid(j.at("image_width").get<int>(), j.at("image_height").get<int>(),
                                      j.at("patch_size").get<int>(), j.at("stride").get<int>());
    if ((j.contains("rows") && j["rows"].get<int>() != grid.rows) ||
        (j.contains("cols") && j["cols"].get<int>() != grid.cols)) {
      throw Error(ErrorKind::DimensionMismatch, "grid sidecar rows/cols inconsistent with geometry");
    }
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::MalformedInput, "grid sidecar " + sidecar.string() + ": " + e.what());
  }
}

/// Loads features and attaches a grid: the sidecar if present, otherwise the
/// grid of `patch_size`/`stride` over the given image size. Without an image
/// size, a rank-3 tensor implies the smallest image covering its grid.
inline FeatureMap load_feature_map(const std::filesystem::path& path,
                                   std::optional<std::pair<int, int>> image_size, int patch_size,
                                   int stride) {
  auto tensor = load_tensor(path);
  if (auto grid = load_grid_sidecar(path)) {
    if (image_size && (image_size->first != grid->image_width || image_size->second != grid->image_height)) {
      throw Error(ErrorKind::DimensionMismatch, "image size disagrees with grid sidecar of " + path.string());
    }
    return make_feature_map(tensor, *grid);
  }
  if (!image_size) {
    if (tensor.rank() != 3) {
      throw Error(ErrorKind::InvalidArgument,
                  "image size unknown for rank-2 features " + path.string());
    }
    image_size = std::pair<int, int>{
        static_cast<int>((tensor.shape[1] - 1) * static_cast<std::size_t>(stride)) + patch_size,
        static_cast<int>((tensor.shape[0] - 1) * static_cast<std::size_t>(stride)) + patch_size};
  }
  return make_feature_map(tensor, build_patch_grid(image_size->first, image_size->second, patch_size, stride));
}

/// Writes features as a rank-3 (rows x cols x dim) tensor.
inline void save_feature_map(const FeatureMap& map, const std::filesystem::path& path) {
  save_tensor(TensorFile{{static_cast<std::size_t>(map.grid.rows),
                          static_cast<std::size_t>(map.grid.cols), map.feature_dim},
                         map.features},
              path);
}

}  // namespace promptforge
