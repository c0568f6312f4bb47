#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace icefuse::grid {

/// 2-D raster of doubles, row-major. Nodata cells hold a canonical quiet
/// NaN; every other cell is finite. Statistics skip nodata cells.
class Grid {
 public:
  static constexpr double kNoData = std::numeric_limits<double>::quiet_NaN();

  Grid() = default;
  Grid(std::size_t height, std::size_t width, double fill = 0.0);
  static Grid filled_nodata(std::size_t height, std::size_t width);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool same_extent(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  double at(std::size_t row, std::size_t col) const noexcept { return values_[row * width_ + col]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  bool valid(std::size_t i) const noexcept;
  bool valid(std::size_t row, std::size_t col) const noexcept { return valid(row * width_ + col); }

  /// Non-finite values mark the cell as nodata.
  void set(std::size_t i, double v) noexcept;
  void set(std::size_t row, std::size_t col, double v) noexcept { set(row * width_ + col, v); }
  void set_nodata(std::size_t i) noexcept;

  std::span<const double> values() const noexcept { return values_; }

  std::size_t valid_count() const noexcept;
  /// Mean over valid cells; NaN when there are none.
  double valid_mean() const noexcept;

  /// Same extent, same nodata cells, identical bits on valid cells.
  bool bitwise_equal(const Grid& other) const noexcept;

  /// Sub-grid of size rows x cols starting at (row, col). Must fit.
  Grid crop(std::size_t row, std::size_t col, std::size_t rows, std::size_t cols) const;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

}  // namespace icefuse::grid
