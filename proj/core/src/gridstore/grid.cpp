#include "icefuse/gridstore/grid.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "icefuse/common/error.hpp"

namespace icefuse::grid {

Grid::Grid(std::size_t height, std::size_t width, double fill) : height_(height), width_(width) {
  if (height == 0 || width == 0) throw DimensionError("grid extents must be positive");
  values_.assign(height * width, std::isfinite(fill) ? fill : kNoData);
}

Grid Grid::filled_nodata(std::size_t height, std::size_t width) { return Grid(height, width, kNoData); }

bool Grid::valid(std::size_t i) const noexcept { return !std::isnan(values_[i]); }

void Grid::set(std::size_t i, double v) noexcept { values_[i] = std::isfinite(v) ? v : kNoData; }

void Grid::set_nodata(std::size_t i) noexcept { values_[i] = kNoData; }

std::size_t Grid::valid_count() const noexcept {
  std::size_t n = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) n += valid(i) ? 1 : 0;
  return n;
}

double Grid::valid_mean() const noexcept {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!valid(i)) continue;
    total += values_[i];
    ++n;
  }
  return n ? total / static_cast<double>(n) : kNoData;
}

bool Grid::bitwise_equal(const Grid& other) const noexcept {
  if (!same_extent(other)) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (valid(i) != other.valid(i)) return false;
    if (valid(i) && std::memcmp(&values_[i], &other.values_[i], sizeof(double)) != 0) return false;
  }
  return true;
}

Grid Grid::crop(std::size_t row, std::size_t col, std::size_t rows, std::size_t cols) const {
  if (row + rows > height_ || col + cols > width_)
    throw DimensionError("crop " + std::to_string(rows) + "x" + std::to_string(cols) + " at (" +
                         std::to_string(row) + "," + std::to_string(col) + ") exceeds grid " +
                         std::to_string(height_) + "x" + std::to_string(width_));
  Grid out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    std::memcpy(&out.values_[r * cols], &values_[(row + r) * width_ + col], cols * sizeof(double));
  return out;
}

}  // namespace icefuse::grid
