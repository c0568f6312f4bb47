#pragma once

#include <cstddef>
#include <vector>

#include "icefuse/gridstore/grid.hpp"

namespace icefuse::grid {

struct ChipOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const ChipOrigin&, const ChipOrigin&) = default;
};

/// Square chips laid over a grid. Along each axis origins step by `stride`
/// and the last origin is clamped so the final chip ends at the grid edge.
struct ChipIndex {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t size = 0;
  std::size_t stride = 0;
  std::vector<std::size_t> row_origins;
  std::vector<std::size_t> col_origins;

  /// Row-major over (row origin, col origin).
  std::vector<ChipOrigin> origins() const;
  std::size_t count() const noexcept { return row_origins.size() * col_origins.size(); }
};

/// Axis origins for one extent; exposed for testing.
std::vector<std::size_t> axis_origins(std::size_t extent, std::size_t size, std::size_t stride);

/// stride = round-half-up(size * (1 - overlap_fraction)), at least 1.
std::size_t chip_stride(std::size_t size, double overlap_fraction);

ChipIndex chip_extract(std::size_t height, std::size_t width, std::size_t size, double overlap_fraction);
ChipIndex chip_extract(const Grid& g, std::size_t size, double overlap_fraction);

struct PlacedChip {
  ChipOrigin origin;
  Grid values;
};

/// Uniform mean of all valid contributions per cell; uncovered cells are nodata.
Grid reassemble(const std::vector<PlacedChip>& chips, std::size_t height, std::size_t width);

/// Mean over valid cells of each factor x factor block. Extents that are not
/// multiples of `factor` are padded with nodata.
Grid downsample_mean(const Grid& g, int factor);

/// Nearest-neighbour expansion of a coarse grid back to height x width.
Grid upsample_nearest(const Grid& coarse, int factor, std::size_t height, std::size_t width);

}  // namespace icefuse::grid
