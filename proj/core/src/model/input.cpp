#include "icefuse/model/input.hpp"

#include <algorithm>
#include <string>

#include "icefuse/common/error.hpp"

namespace icefuse::model {

namespace {

void check_window(const grid::Grid& g, grid::ChipOrigin o, std::size_t size) {
  if (o.row + size > g.height() || o.col + size > g.width())
    throw DimensionError("chip at (" + std::to_string(o.row) + ", " + std::to_string(o.col) + ") of size " +
                         std::to_string(size) + " exceeds " + std::to_string(g.height()) + "x" +
                         std::to_string(g.width()) + " grid");
}

}  // namespace

nk::Tensor chip_tensor(std::span<const grid::Grid* const> channels, grid::ChipOrigin origin, std::size_t size) {
  if (channels.empty()) throw DimensionError("chip_tensor: no channels");
  nk::Tensor out({channels.size(), size, size});
  auto* dst = out.data().data();
  for (const grid::Grid* g : channels) {
    check_window(*g, origin, size);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        const double v = g->at(origin.row + r, origin.col + c);
        *dst++ = g->valid(origin.row + r, origin.col + c) ? v : 0.0;
      }
  }
  return out;
}

std::vector<bool> input_mask(std::span<const grid::Grid* const> channels, grid::ChipOrigin origin, std::size_t size) {
  std::vector<bool> mask(size * size, true);
  for (const grid::Grid* g : channels) {
    check_window(*g, origin, size);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c)
        if (!g->valid(origin.row + r, origin.col + c)) mask[r * size + c] = false;
  }
  return mask;
}

nk::Tensor stack(std::span<const nk::Tensor> items) {
  if (items.empty()) throw DimensionError("stack: no items");
  nk::Shape shape{items.size()};
  shape.insert(shape.end(), items.front().shape().begin(), items.front().shape().end());
  std::vector<double> data;
  data.reserve(nk::shape_numel(shape));
  for (const auto& t : items) {
    if (t.shape() != items.front().shape())
      throw DimensionError("stack: shape " + nk::shape_string(t.shape()) + " differs from " +
                           nk::shape_string(items.front().shape()));
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return nk::Tensor(std::move(shape), std::move(data));
}

std::vector<grid::Grid> to_grids(const nk::Tensor& y) {
  const auto& s = y.shape();
  if (s.size() != 4 || s[1] != 1) throw DimensionError("to_grids expects [B, 1, H, W], got " + nk::shape_string(s));
  std::vector<grid::Grid> out;
  const std::size_t cells = s[2] * s[3];
  for (std::size_t b = 0; b < s[0]; ++b) {
    grid::Grid g(s[2], s[3]);
    for (std::size_t i = 0; i < cells; ++i) g.set(i, y[b * cells + i]);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace icefuse::model
