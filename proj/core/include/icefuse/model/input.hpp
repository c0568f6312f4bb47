#pragma once

#include <span>
#include <vector>

#include "icefuse/gridstore/chips.hpp"
#include "icefuse/gridstore/grid.hpp"
#include "icefuse/numkernel/tensor.hpp"

namespace icefuse::model {

/// Crops one size x size window from each channel into a [C, size, size]
/// tensor. Nodata inputs are fed as 0; see input_mask().
nk::Tensor chip_tensor(std::span<const grid::Grid* const> channels, grid::ChipOrigin origin, std::size_t size);

/// True where every channel is valid inside the window.
std::vector<bool> input_mask(std::span<const grid::Grid* const> channels, grid::ChipOrigin origin, std::size_t size);

/// Stacks equally shaped [C, H, W] tensors into [N, C, H, W].
nk::Tensor stack(std::span<const nk::Tensor> items);

/// Splits a [B, 1, H, W] prediction into B grids.
std::vector<grid::Grid> to_grids(const nk::Tensor& y);

}  // namespace icefuse::model
