#pragma once

#include <string>
#include <vector>

#include "icefuse/gridstore/grid.hpp"

namespace icefuse::fusion {

/// One sensor's SIC estimate and its standard deviation.
struct Source {
  std::string id;
  grid::Grid sic;
  grid::Grid sigma;
};

/// Sources ordered lowest priority first.
using FusionStack = std::vector<Source>;

/// amsr2, rcm, sentinel1.
const std::vector<std::string>& default_order();

/// True exactly where the cell holds a valid value.
std::vector<bool> availability(const grid::Grid& g);

struct Fused {
  grid::Grid sic;
  grid::Grid sigma;
};

/// Starts from the lowest source and lets every higher source overwrite the
/// cells where it is available; sic and sigma move together. Cells no source
/// covers stay nodata. DimensionError on extent mismatch, ContractError when
/// a source's sic and sigma masks differ or the stack is empty.
Fused fuse(const FusionStack& stack);

}  // namespace icefuse::fusion
