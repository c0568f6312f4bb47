#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icefuse/gridstore/chips.hpp"
#include "icefuse/gridstore/grid.hpp"
#include "icefuse/model/config.hpp"
#include "icefuse/model/parameters.hpp"
#include "icefuse/model/transformer.hpp"

namespace icefuse::bayes {

enum class Estimator { BBB, MCDropout, EpochEnsemble, Deterministic };

std::string_view estimator_name(Estimator e) noexcept;
/// "bbb", "mc_dropout", "epoch_ensemble" or "deterministic"; ConfigError otherwise.
Estimator parse_estimator(std::string_view name);

struct UncertaintyResult {
  grid::Grid mean;
  grid::Grid std;
  std::size_t n_samples = 0;
  Estimator estimator = Estimator::Deterministic;
};

/// Per-cell mean and population standard deviation. Cells that are nodata in
/// the samples stay nodata in both outputs.
UncertaintyResult predictive_stats(const std::vector<grid::Grid>& samples, Estimator tag);

/// Keep probability shared by the four dropout sites.
struct DropoutSpec {
  double keep = 0.9;
  void validate() const;
};

/// Inverted-dropout masks (0 or 1/keep) drawn from stream (key, site).
model::DropoutProvider dropout_masks(const DropoutSpec& spec, std::uint64_t key);

// Estimators take a batch x[B, C, H0, W0] and return one result per chip.
// Inference i draws from stream (seed, i), so results do not depend on the
// number of worker threads.

std::vector<UncertaintyResult> bbb_infer(const model::ParameterSet& variational, const nk::Tensor& x,
                                         const model::ModelConfig& cfg, std::size_t n, std::uint64_t seed);
std::vector<UncertaintyResult> mc_dropout_infer(const model::ParameterSet& weights, const nk::Tensor& x,
                                                const model::ModelConfig& cfg, const DropoutSpec& spec,
                                                std::size_t n, std::uint64_t seed);
std::vector<UncertaintyResult> epoch_ensemble_infer(const std::vector<model::ParameterSet>& checkpoints,
                                                    const nk::Tensor& x, const model::ModelConfig& cfg);
std::vector<UncertaintyResult> deterministic_infer(const model::ParameterSet& weights, const nk::Tensor& x,
                                                   const model::ModelConfig& cfg);

/// Everything an estimator needs besides the input.
struct PredictiveModel {
  Estimator estimator = Estimator::BBB;
  model::ModelConfig config;
  /// One set for bbb / mc_dropout / deterministic, all members for epoch_ensemble.
  std::vector<model::ParameterSet> weights;
  std::size_t n_inferences = 30;
  std::uint64_t seed = 0;
  DropoutSpec dropout;
};

std::vector<UncertaintyResult> infer(const PredictiveModel& m, const nk::Tensor& x);

/// Chips the channel grids, runs the estimator chip by chip and reassembles
/// mean and std by uniform averaging over overlaps. Cells with any nodata
/// input are nodata in the result.
UncertaintyResult infer_scene(const PredictiveModel& m, std::span<const grid::Grid* const> channels,
                              double overlap);

/// Channel grids of one scene, in model channel order.
using SceneChannels = std::vector<const grid::Grid*>;

/// infer_scene over many scenes, running up to `batch` chips per forward pass.
/// Every chip sees the same weight draws as in infer_scene, so results match
/// it chip for chip.
std::vector<UncertaintyResult> infer_scenes(const PredictiveModel& m, const std::vector<SceneChannels>& scenes,
                                            double overlap, std::size_t batch = 16);

}  // namespace icefuse::bayes
