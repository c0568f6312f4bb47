#include "icefuse/supervision/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "icefuse/bayes/estimators.hpp"
#include "icefuse/bayes/variational.hpp"
#include "icefuse/common/error.hpp"
#include "icefuse/common/parallel.hpp"
#include "icefuse/common/rng.hpp"
#include "icefuse/model/input.hpp"
#include "icefuse/model/transformer.hpp"
#include "icefuse/numkernel/ops.hpp"

namespace icefuse::supervision {

void Adam::step(model::ParameterSet& params, const std::map<std::string, nk::Tensor, std::less<>>& grads) {
  ++t_;
  const double inv_c1 = 1.0 / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const double inv_c2 = 1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("gradient for unknown parameter '" + name + "'");
    auto& p = it->second;
    if (g.shape() != p.shape()) throw DimensionError("gradient shape mismatch for '" + name + "'");
    auto [mit, fresh] = moments_.try_emplace(name, nk::Tensor(p.shape(), 0.0), nk::Tensor(p.shape(), 0.0));
    auto& [m, v] = mit->second;
    double* pm = m.data().data();
    double* pv = v.data().data();
    double* pp = p.data().data();
    const double* pg = g.data().data();
    const double b1 = cfg_.beta1, b2 = cfg_.beta2, lr = cfg_.learning_rate, eps = cfg_.epsilon;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      pm[i] = b1 * pm[i] + (1.0 - b1) * pg[i];
      pv[i] = b2 * pv[i] + (1.0 - b2) * pg[i] * pg[i];
      pp[i] -= lr * (pm[i] * inv_c1) / (std::sqrt(pv[i] * inv_c2) + eps);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(kl_scale >= 0.0)) throw ConfigError("train.kl_scale must be non-negative");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (dropout_keep && !(*dropout_keep > 0.0 && *dropout_keep <= 1.0))
    throw ConfigError("train.dropout_keep must lie in (0, 1]");
  geo.validate();
}

namespace {

nk::Tensor batch_input(const std::vector<TrainingChip>& chips, std::span<const std::size_t> idx) {
  std::vector<nk::Tensor> items;
  items.reserve(idx.size());
  for (auto i : idx) items.push_back(chips[i].input);
  return model::stack(items);
}

// Slice b of a [B, 1, H, W] prediction as a flat [H * W] var.
nk::Var chip_slice(nk::Var y, std::size_t b) {
  const std::size_t cells = y.shape()[2] * y.shape()[3];
  std::vector<std::size_t> index(cells);
  std::iota(index.begin(), index.end(), b * cells);
  return nk::gather(y, std::move(index), {cells});
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t size, std::uint64_t shuffle_key) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Stream s(shuffle_key);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[s.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += size)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + size)));
  return out;
}

}  // namespace

double validation_loss(const model::ParameterSet& params, const model::ModelConfig& cfg,
                       const std::vector<TrainingChip>& chips, const GeoWeights& gw, std::size_t batch_size) {
  if (chips.empty()) throw ContractError("validation set is empty");
  const auto weights = model::mean_weights(params);
  std::vector<std::size_t> all(chips.size());
  std::iota(all.begin(), all.end(), 0);
  const std::size_t nb = (chips.size() + batch_size - 1) / batch_size;
  std::vector<double> losses(chips.size());
  parallel_for(nb, [&](std::size_t b) {
    const std::span<const std::size_t> idx(all.data() + b * batch_size,
                                           std::min(batch_size, chips.size() - b * batch_size));
    const auto preds = model::to_grids(model::predict(weights, batch_input(chips, idx), cfg));
    for (std::size_t k = 0; k < idx.size(); ++k)
      losses[idx[k]] = l1_gw_loss(preds[k], chips[idx[k]].label, chips[idx[k]].region, gw);
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(chips.size());
}

TrainResult train(const TrainConfig& cfg, const model::ModelConfig& model_cfg,
                  const std::vector<TrainingChip>& train_set, const std::vector<TrainingChip>& val_set,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  model_cfg.validate();
  if (train_set.empty()) throw ContractError("training set is empty");
  if (val_set.empty()) throw ContractError("validation set is empty");
  const bool variational = cfg.variant == model::Variant::Variational;

  auto params = variational ? model::init_variational(model_cfg, derive_key(cfg.seed, "init"))
                            : model::init_deterministic(model_cfg, derive_key(cfg.seed, "init"));
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  Adam adam(cfg.adam);
  TrainResult result;
  const std::size_t batches_per_epoch = (train_set.size() + cfg.batch_size - 1) / cfg.batch_size;
  const double kl_scale = cfg.kl_per_batch ? cfg.kl_scale / static_cast<double>(batches_per_epoch) : cfg.kl_scale;
  double best_val = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double l1_sum = 0, kl_sum = 0;
    const auto plan = batches(train_set.size(), cfg.batch_size, derive_key(derive_key(cfg.seed, "shuffle"), epoch));
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const std::uint64_t step_key = derive_key(derive_key(cfg.seed, "step"), adam.steps());
      nk::Graph g;
      model::BoundWeights leaves, weights;
      std::optional<nk::Var> kl;
      if (variational) {
        auto sample = bayes::bind_posterior_sample(g, params, step_key, true);
        leaves = std::move(sample.leaves);
        weights = std::move(sample.weights);
        kl = sample.kl;
      } else {
        leaves = model::bind_parameters(g, params, true);
        weights = leaves;
      }
      model::DropoutProvider dropout;
      if (cfg.dropout_keep) dropout = bayes::dropout_masks({*cfg.dropout_keep}, derive_key(step_key, "dropout"));

      const auto& idx = plan[b];
      const auto y = model::forward(g.leaf(batch_input(train_set, idx)), weights, model_cfg, dropout);
      std::optional<nk::Var> data_loss;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& chip = train_set[idx[k]];
        const auto term = l1_gw_loss(chip_slice(y, k), chip.label, chip.region, cfg.geo);
        data_loss = data_loss ? nk::add(*data_loss, term) : term;
      }
      const auto loss = kl ? total_loss(*data_loss, *kl, kl_scale) : *data_loss;
      const double value = loss.value().item();
      if (!std::isfinite(value))
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b + 1) + " (l1gw " + std::to_string(data_loss->value().item()) + ")");
      l1_sum += data_loss->value().item();
      if (kl) kl_sum += kl->value().item();

      g.backward(loss);
      std::map<std::string, nk::Tensor, std::less<>> grads;
      for (const auto& [name, var] : leaves) grads.emplace(name, g.grad(var));
      adam.step(params, grads);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_l1gw = l1_sum / static_cast<double>(train_set.size());
    rec.train_kl = kl_sum / static_cast<double>(plan.size());
    rec.val_l1gw = validation_loss(params, model_cfg, val_set, cfg.geo, cfg.batch_size);
    if (!std::isfinite(rec.val_l1gw))
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    if (!cfg.checkpoint_dir.empty())
      model::write_checkpoint(params, cfg.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".sicw"));
    if (epoch == 1 || rec.val_l1gw < best_val) {
      best_val = rec.val_l1gw;
      result.best_epoch = epoch;
      result.best = params;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.last = std::move(params);
  return result;
}

void write_loss_log(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write loss log: " + path.string());
  out.precision(17);
  out << "epoch,train_l1gw,train_kl,val_l1gw\n";
  for (const auto& r : history)
    out << r.epoch << ',' << r.train_l1gw << ',' << r.train_kl << ',' << r.val_l1gw << '\n';
}

}  // namespace icefuse::supervision
