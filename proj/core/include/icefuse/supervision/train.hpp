#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icefuse/model/config.hpp"
#include "icefuse/model/parameters.hpp"
#include "icefuse/supervision/dataset.hpp"
#include "icefuse/supervision/loss.hpp"

namespace icefuse::supervision {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adaptive-moment optimizer with bias correction; state is keyed by tensor name.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// Applies one update to every parameter that has a gradient.
  void step(model::ParameterSet& params, const std::map<std::string, nk::Tensor, std::less<>>& grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::map<std::string, std::pair<nk::Tensor, nk::Tensor>, std::less<>> moments_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 4;
  double kl_scale = 1.0;
  /// Divide kl_scale by the number of batches per epoch.
  bool kl_per_batch = false;
  GeoWeights geo;
  std::uint64_t seed = 0;
  AdamConfig adam;
  model::Variant variant = model::Variant::Variational;
  /// Train-time dropout keep probability (deterministic models for MC dropout).
  std::optional<double> dropout_keep;
  /// When set, epoch_<n>.sicw is written here after every epoch.
  std::filesystem::path checkpoint_dir;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_l1gw = 0;  // mean per chip
  double train_kl = 0;    // mean per batch
  double val_l1gw = 0;    // mean per chip, posterior-mean weights
  double wall_ms = 0;
};

struct TrainResult {
  std::size_t best_epoch = 0;
  model::ParameterSet best;
  model::ParameterSet last;
  std::vector<EpochRecord> history;
};

/// Mean L1-GW loss per chip under deterministic (or posterior-mean) weights.
double validation_loss(const model::ParameterSet& params, const model::ModelConfig& cfg,
                       const std::vector<TrainingChip>& chips, const GeoWeights& gw, std::size_t batch_size = 4);

/// Minibatch training. Each step draws one posterior sample (variational)
/// and minimizes sum of chip losses + kl_scale * KL. The epoch with the
/// lowest validation loss is returned (earliest on ties). NumericalError on a
/// non-finite loss.
TrainResult train(const TrainConfig& cfg, const model::ModelConfig& model_cfg,
                  const std::vector<TrainingChip>& train_set, const std::vector<TrainingChip>& val_set,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// CSV with header epoch,train_l1gw,train_kl,val_l1gw.
void write_loss_log(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace icefuse::supervision
