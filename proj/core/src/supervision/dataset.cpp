#include "icefuse/supervision/dataset.hpp"

#include "icefuse/gridstore/chips.hpp"
#include "icefuse/model/input.hpp"

namespace icefuse::supervision {

std::vector<TrainingChip> scene_chips(const synth::Scene& scene, const std::vector<std::string>& channels,
                                      std::size_t size, double overlap) {
  std::vector<const grid::Grid*> inputs;
  for (const auto& name : channels) inputs.push_back(&scene.channel(name));
  const auto label = synth::training_label(scene);
  std::vector<TrainingChip> out;
  for (const auto& o : grid::chip_extract(scene.truth_sic, size, overlap).origins()) {
    auto region = scene.region_chart.crop(o.row, o.col, size, size);
    if (region.valid_count() == 0) continue;
    out.push_back({model::chip_tensor(inputs, o, size), label.crop(o.row, o.col, size, size), std::move(region),
                   scene.truth_sic.crop(o.row, o.col, size, size)});
  }
  return out;
}

}  // namespace icefuse::supervision
