#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icefuse/bayes/estimators.hpp"
#include "icefuse/evalmetrics/metrics.hpp"
#include "icefuse/model/config.hpp"
#include "icefuse/supervision/train.hpp"
#include "icefuse/synthgen/scene.hpp"

namespace icefuse::cli {

/// Scene counts of the synthetic dataset; scenes are split in index order.
struct DataSplit {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total() const noexcept { return train + val + test; }
};

/// Fully defaulted run configuration. Every key of a user document must
/// exist in the defaults with a compatible type.
class RunConfig {
 public:
  RunConfig();

  /// Defaults, then the JSON file (if any), then `key.path=value` overrides.
  /// ConfigError names the offending key path.
  static RunConfig load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

  void merge(const nlohmann::json& doc);
  void set(const std::string& assignment);

  const nlohmann::json& document() const noexcept { return doc_; }
  std::string dump() const { return doc_.dump(2) + "\n"; }
  void write(const std::filesystem::path& path) const;

  model::ModelConfig model() const;
  std::vector<std::string> channels() const;
  supervision::TrainConfig train() const;
  double chip_overlap() const;

  bayes::Estimator estimator() const;
  std::size_t n_inferences() const;
  std::uint64_t inference_seed() const;
  std::size_t burn_in() const;

  synth::SceneParams scene_params() const;
  std::uint64_t scene_seed() const;
  DataSplit split() const;

  std::vector<std::string> fusion_order() const;

  eval::EceConfig ece() const;
  int eval_downsample() const;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;

 private:
  nlohmann::json doc_;
};

}  // namespace icefuse::cli
