#pragma once

#include <string>
#include <vector>

#include "icefuse/gridstore/grid.hpp"
#include "icefuse/numkernel/tensor.hpp"
#include "icefuse/synthgen/scene.hpp"

namespace icefuse::supervision {

/// One training sample: model input [C, size, size] with its weak label,
/// region chart and (for evaluation only) the true SIC.
struct TrainingChip {
  nk::Tensor input;
  grid::Grid label;
  grid::Grid region;
  grid::Grid truth;
};

/// Chips a scene with the given overlap. The label is the scene's training
/// label (corrupted in the MIZ when the scene parameters ask for it). Chips
/// whose region chart is entirely nodata are skipped.
std::vector<TrainingChip> scene_chips(const synth::Scene& scene, const std::vector<std::string>& channels,
                                      std::size_t size, double overlap);

}  // namespace icefuse::supervision
