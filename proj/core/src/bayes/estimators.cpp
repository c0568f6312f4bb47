#include "icefuse/bayes/estimators.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "icefuse/bayes/variational.hpp"
#include "icefuse/common/error.hpp"
#include "icefuse/common/parallel.hpp"
#include "icefuse/common/rng.hpp"
#include "icefuse/model/input.hpp"

namespace icefuse::bayes {

std::string_view estimator_name(Estimator e) noexcept {
  switch (e) {
    case Estimator::BBB: return "bbb";
    case Estimator::MCDropout: return "mc_dropout";
    case Estimator::EpochEnsemble: return "epoch_ensemble";
    case Estimator::Deterministic: return "deterministic";
  }
  return "unknown";
}

Estimator parse_estimator(std::string_view name) {
  for (auto e : {Estimator::BBB, Estimator::MCDropout, Estimator::EpochEnsemble, Estimator::Deterministic})
    if (estimator_name(e) == name) return e;
  throw ConfigError("unknown estimator '" + std::string(name) +
                    "' (expected bbb, mc_dropout, epoch_ensemble or deterministic)");
}

UncertaintyResult predictive_stats(const std::vector<grid::Grid>& samples, Estimator tag) {
  if (samples.empty()) throw ContractError("predictive_stats: no samples");
  const auto& first = samples.front();
  for (const auto& s : samples) {
    if (!s.same_extent(first)) throw ContractError("predictive_stats: samples differ in extent");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s.valid(i) != first.valid(i)) throw ContractError("predictive_stats: samples differ in nodata mask");
  }
  const double n = static_cast<double>(samples.size());
  UncertaintyResult r{grid::Grid::filled_nodata(first.height(), first.width()),
                      grid::Grid::filled_nodata(first.height(), first.width()), samples.size(), tag};
  for (std::size_t i = 0; i < first.size(); ++i) {
    if (!first.valid(i)) continue;
    // Shifted by the first sample so identical samples give exactly that value and std 0.
    const double x0 = first[i];
    double shift = 0;
    for (const auto& s : samples) shift += s[i] - x0;
    const double mean = x0 + shift / n;
    double ss = 0;
    for (const auto& s : samples) ss += (s[i] - mean) * (s[i] - mean);
    r.mean.set(i, mean);
    r.std.set(i, std::sqrt(ss / n));
  }
  return r;
}

void DropoutSpec::validate() const {
  if (!(keep > 0.0) || keep > 1.0)
    throw ContractError("dropout keep probability must lie in (0, 1], got " + std::to_string(keep));
}

model::DropoutProvider dropout_masks(const DropoutSpec& spec, std::uint64_t key) {
  spec.validate();
  const double keep = spec.keep;
  return [keep, key](const std::string& site, const nk::Shape& shape) -> std::optional<nk::Tensor> {
    nk::Tensor mask(shape);
    if (keep >= 1.0) {
      mask.fill(1.0);
      return mask;
    }
    const CounterRng rng(derive_key(key, site));
    const double scale = 1.0 / keep;
    for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(i, keep) ? scale : 0.0;
    return mask;
  };
}

namespace {

using SampleFn = std::function<nk::Tensor(std::size_t)>;

std::vector<UncertaintyResult> aggregate(std::size_t n, Estimator tag, const SampleFn& draw) {
  if (n == 0) throw ContractError("estimator needs at least one inference");
  std::vector<nk::Tensor> outputs(n);
  parallel_for(n, [&](std::size_t i) { outputs[i] = draw(i); });
  const auto batch = outputs.front().shape()[0];
  std::vector<UncertaintyResult> results;
  results.reserve(batch);
  std::vector<std::vector<grid::Grid>> per_chip(batch);
  for (const auto& y : outputs) {
    auto grids = model::to_grids(y);
    for (std::size_t b = 0; b < batch; ++b) per_chip[b].push_back(std::move(grids[b]));
  }
  for (auto& samples : per_chip) results.push_back(predictive_stats(samples, tag));
  return results;
}

}  // namespace

std::vector<UncertaintyResult> bbb_infer(const model::ParameterSet& variational, const nk::Tensor& x,
                                         const model::ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
  model::check_complete(variational, cfg, model::Variant::Variational);
  return aggregate(n, Estimator::BBB, [&](std::size_t i) {
    const auto drawn = sample_parameter_set(variational, derive_key(seed, i));
    return model::predict(drawn, x, cfg);
  });
}

std::vector<UncertaintyResult> mc_dropout_infer(const model::ParameterSet& weights, const nk::Tensor& x,
                                                const model::ModelConfig& cfg, const DropoutSpec& spec,
                                                std::size_t n, std::uint64_t seed) {
  spec.validate();
  model::check_complete(weights, cfg, model::Variant::Deterministic);
  return aggregate(n, Estimator::MCDropout, [&](std::size_t i) {
    return model::predict(weights, x, cfg, dropout_masks(spec, derive_key(seed, i)));
  });
}

std::vector<UncertaintyResult> epoch_ensemble_infer(const std::vector<model::ParameterSet>& checkpoints,
                                                    const nk::Tensor& x, const model::ModelConfig& cfg) {
  if (checkpoints.empty()) throw ContractError("epoch ensemble needs at least one checkpoint");
  std::vector<model::ParameterSet> members;
  for (const auto& c : checkpoints) {
    auto m = model::mean_weights(c);
    model::check_complete(m, cfg, model::Variant::Deterministic);
    members.push_back(std::move(m));
  }
  return aggregate(members.size(), Estimator::EpochEnsemble,
                   [&](std::size_t i) { return model::predict(members[i], x, cfg); });
}

std::vector<UncertaintyResult> deterministic_infer(const model::ParameterSet& weights, const nk::Tensor& x,
                                                   const model::ModelConfig& cfg) {
  const auto w = model::mean_weights(weights);
  model::check_complete(w, cfg, model::Variant::Deterministic);
  return aggregate(1, Estimator::Deterministic, [&](std::size_t) { return model::predict(w, x, cfg); });
}

std::vector<UncertaintyResult> infer(const PredictiveModel& m, const nk::Tensor& x) {
  if (m.weights.empty()) throw ConfigError("no model weights loaded");
  switch (m.estimator) {
    case Estimator::BBB: return bbb_infer(m.weights.front(), x, m.config, m.n_inferences, m.seed);
    case Estimator::MCDropout:
      return mc_dropout_infer(model::mean_weights(m.weights.front()), x, m.config, m.dropout, m.n_inferences,
                              m.seed);
    case Estimator::EpochEnsemble: return epoch_ensemble_infer(m.weights, x, m.config);
    case Estimator::Deterministic: return deterministic_infer(m.weights.front(), x, m.config);
  }
  throw ContractError("unhandled estimator");
}

std::vector<UncertaintyResult> infer_scenes(const PredictiveModel& m, const std::vector<SceneChannels>& scenes,
                                            double overlap, std::size_t batch) {
  if (batch == 0) throw ContractError("inference batch must be positive");
  const std::size_t size = m.config.chip;
  struct Job {
    std::size_t scene;
    grid::ChipOrigin origin;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& channels = scenes[s];
    if (channels.size() != m.config.channels)
      throw DimensionError("model expects " + std::to_string(m.config.channels) + " channels, got " +
                           std::to_string(channels.size()));
    for (const auto* g : channels)
      if (!g->same_extent(*channels.front())) throw DimensionError("channel grids differ in extent");
    for (const auto& origin : grid::chip_extract(*channels.front(), size, overlap).origins()) jobs.push_back({s, origin});
  }

  std::vector<std::vector<grid::PlacedChip>> means(scenes.size()), stds(scenes.size());
  std::size_t n_samples = 0;
  for (std::size_t first = 0; first < jobs.size(); first += batch) {
    const std::size_t last = std::min(jobs.size(), first + batch);
    std::vector<nk::Tensor> chips;
    for (std::size_t j = first; j < last; ++j) chips.push_back(model::chip_tensor(scenes[jobs[j].scene], jobs[j].origin, size));
    auto results = infer(m, model::stack(chips));
    for (std::size_t j = first; j < last; ++j) {
      auto& r = results[j - first];
      const auto mask = model::input_mask(scenes[jobs[j].scene], jobs[j].origin, size);
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i]) {
          r.mean.set_nodata(i);
          r.std.set_nodata(i);
        }
      n_samples = r.n_samples;
      means[jobs[j].scene].push_back({jobs[j].origin, std::move(r.mean)});
      stds[jobs[j].scene].push_back({jobs[j].origin, std::move(r.std)});
    }
  }
  std::vector<UncertaintyResult> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& ref = *scenes[s].front();
    out.push_back({grid::reassemble(means[s], ref.height(), ref.width()),
                   grid::reassemble(stds[s], ref.height(), ref.width()), n_samples, m.estimator});
  }
  return out;
}

UncertaintyResult infer_scene(const PredictiveModel& m, std::span<const grid::Grid* const> channels,
                              double overlap) {
  return std::move(infer_scenes(m, {SceneChannels(channels.begin(), channels.end())}, overlap).front());
}

}  // namespace icefuse::bayes
