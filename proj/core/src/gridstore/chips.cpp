#include "icefuse/gridstore/chips.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "icefuse/common/error.hpp"

namespace icefuse::grid {

std::vector<ChipOrigin> ChipIndex::origins() const {
  std::vector<ChipOrigin> out;
  out.reserve(count());
  for (auto r : row_origins)
    for (auto c : col_origins) out.push_back({r, c});
  return out;
}

std::size_t chip_stride(std::size_t size, double overlap_fraction) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
    throw ContractError("overlap fraction must lie in [0, 1), got " + std::to_string(overlap_fraction));
  const double raw = static_cast<double>(size) * (1.0 - overlap_fraction);
  const auto stride = static_cast<std::size_t>(std::floor(raw + 0.5));
  return std::max<std::size_t>(stride, 1);
}

std::vector<std::size_t> axis_origins(std::size_t extent, std::size_t size, std::size_t stride) {
  if (size == 0 || size > extent)
    throw DimensionError("chip size " + std::to_string(size) + " does not fit extent " + std::to_string(extent));
  if (stride == 0) throw ContractError("chip stride must be positive");
  std::vector<std::size_t> origins{0};
  while (origins.back() + size < extent) origins.push_back(std::min(origins.back() + stride, extent - size));
  return origins;
}

ChipIndex chip_extract(std::size_t height, std::size_t width, std::size_t size, double overlap_fraction) {
  ChipIndex idx;
  idx.height = height;
  idx.width = width;
  idx.size = size;
  idx.stride = chip_stride(size, overlap_fraction);
  idx.row_origins = axis_origins(height, size, idx.stride);
  idx.col_origins = axis_origins(width, size, idx.stride);
  return idx;
}

ChipIndex chip_extract(const Grid& g, std::size_t size, double overlap_fraction) {
  return chip_extract(g.height(), g.width(), size, overlap_fraction);
}

Grid reassemble(const std::vector<PlacedChip>& chips, std::size_t height, std::size_t width) {
  std::vector<double> total(height * width, 0.0);
  std::vector<std::size_t> hits(height * width, 0);
  for (const auto& chip : chips) {
    const auto& v = chip.values;
    if (chip.origin.row + v.height() > height || chip.origin.col + v.width() > width)
      throw DimensionError("reassemble: chip exceeds output bounds");
    for (std::size_t r = 0; r < v.height(); ++r)
      for (std::size_t c = 0; c < v.width(); ++c) {
        if (!v.valid(r, c)) continue;
        const std::size_t i = (chip.origin.row + r) * width + chip.origin.col + c;
        total[i] += v.at(r, c);
        ++hits[i];
      }
  }
  Grid out = Grid::filled_nodata(height, width);
  for (std::size_t i = 0; i < total.size(); ++i)
    if (hits[i]) out.set(i, hits[i] == 1 ? total[i] : total[i] / static_cast<double>(hits[i]));
  return out;
}

Grid downsample_mean(const Grid& g, int factor) {
  if (factor <= 0) throw ContractError("downsample factor must be positive, got " + std::to_string(factor));
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t oh = (g.height() + f - 1) / f;
  const std::size_t ow = (g.width() + f - 1) / f;
  Grid out = Grid::filled_nodata(oh, ow);
  for (std::size_t orow = 0; orow < oh; ++orow)
    for (std::size_t ocol = 0; ocol < ow; ++ocol) {
      double total = 0.0;
      std::size_t n = 0;
      for (std::size_t r = orow * f; r < std::min(g.height(), (orow + 1) * f); ++r)
        for (std::size_t c = ocol * f; c < std::min(g.width(), (ocol + 1) * f); ++c) {
          if (!g.valid(r, c)) continue;
          total += g.at(r, c);
          ++n;
        }
      if (n) out.set(orow, ocol, total / static_cast<double>(n));
    }
  return out;
}

Grid upsample_nearest(const Grid& coarse, int factor, std::size_t height, std::size_t width) {
  if (factor <= 0) throw ContractError("upsample factor must be positive");
  const auto f = static_cast<std::size_t>(factor);
  if ((height + f - 1) / f != coarse.height() || (width + f - 1) / f != coarse.width())
    throw DimensionError("upsample_nearest: coarse extent does not match target");
  Grid out(height, width);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) out.set(r, c, coarse.at(r / f, c / f));
  return out;
}

}  // namespace icefuse::grid
