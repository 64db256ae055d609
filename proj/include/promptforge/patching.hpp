#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "promptforge/error.hpp"
#include "promptforge/prompt.hpp"
#include "promptforge/tensor_io.hpp"

namespace promptforge {

/// Sliding-window layout over an image. Only full windows are kept; partial
/// windows at the right and bottom borders are dropped.
struct PatchGrid {
  int image_width = 0;
  int image_height = 0;
  int patch_size = 0;
  int stride = 0;
  int rows = 0;
  int cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

struct PixelPoint {
  int x = 0;
  int y = 0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

inline PatchGrid build_patch_grid(int image_width, int image_height, int patch_size, int stride) {
  if (patch_size < 1) throw Error(ErrorKind::InvalidArgument, "patch_size must be >= 1");
  if (stride < 1) throw Error(ErrorKind::InvalidArgument, "stride must be >= 1");
  if (stride > patch_size) {
    throw Error(ErrorKind::InvalidArgument, "stride must not exceed patch_size");
  }
  if (patch_size > image_width || patch_size > image_height) {
    throw Error(ErrorKind::InvalidArgument,
                "patch_size " + std::to_string(patch_size) + " exceeds image " +
                    std::to_string(image_width) + "x" + std::to_string(image_height));
  }
  return PatchGrid{image_width,
                   image_height,
                   patch_size,
                   stride,
                   (image_height - patch_size) / stride + 1,
                   (image_width - patch_size) / stride + 1};
}

/// Row-major index -> pixel center (rounded down).
inline PixelPoint patch_center(const PatchGrid& grid, std::size_t index) {
  if (index >= grid.size()) {
    throw Error(ErrorKind::OutOfRange, "patch index " + std::to_string(index) + " >= " +
                                           std::to_string(grid.size()));
  }
  const int row = static_cast<int>(index / static_cast<std::size_t>(grid.cols));
  const int col = static_cast<int>(index % static_cast<std::size_t>(grid.cols));
  const int half = grid.patch_size / 2;
  return {col * grid.stride + half, row * grid.stride + half};
}

/// A patch is Positive iff the mask pixel at its center is set.
inline std::vector<PatchLabel> label_reference_patches(const PatchGrid& grid,
                                                       const MaskImage& mask) {
  if (mask.width != grid.image_width || mask.height != grid.image_height) {
    throw Error(ErrorKind::DimensionMismatch,
                "mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                    " vs grid image " + std::to_string(grid.image_width) + "x" +
                    std::to_string(grid.image_height));
  }
  std::vector<PatchLabel> labels(grid.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = patch_center(grid, i);
    labels[i] = mask.at(c.x, c.y) ? PatchLabel::Positive : PatchLabel::Negative;
  }
  return labels;
}

}  // namespace promptforge
