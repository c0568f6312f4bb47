#include "icefuse/cli/app.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>

#include <CLI11.hpp>

#include "icefuse/bayes/estimators.hpp"
#include "icefuse/cli/config.hpp"
#include "icefuse/common/error.hpp"
#include "icefuse/common/rng.hpp"
#include "icefuse/evalmetrics/metrics.hpp"
#include "icefuse/fusion/fuse.hpp"
#include "icefuse/gridstore/chips.hpp"
#include "icefuse/gridstore/sicg.hpp"
#include "icefuse/model/parameters.hpp"
#include "icefuse/model/transformer.hpp"
#include "icefuse/numkernel/gradcheck.hpp"
#include "icefuse/numkernel/ops.hpp"
#include "icefuse/supervision/dataset.hpp"
#include "icefuse/supervision/train.hpp"
#include "icefuse/synthgen/scene.hpp"

namespace icefuse::cli {

namespace fs = std::filesystem;

namespace {

struct RunDir {
  fs::path root;

  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path grids() const { return root / "grids"; }
  fs::path metrics() const { return root / "metrics"; }
  fs::path scenes(const std::string& split) const { return grids() / "scenes" / split; }
  fs::path predictions(bayes::Estimator e) const { return grids() / "pred" / std::string(bayes::estimator_name(e)); }

  void create(const RunConfig& cfg) const {
    for (const auto& d : {root, checkpoints(), grids(), metrics()}) fs::create_directories(d);
    cfg.write(root / "config.json");
  }
};

std::string scene_dir_name(std::size_t index) {
  std::string s = std::to_string(index);
  return "scene_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

std::vector<fs::path> sorted_dirs(const fs::path& parent) {
  if (!fs::is_directory(parent)) throw FormatError("missing directory " + parent.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(parent))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::vector<synth::Scene> load_split(const RunDir& run, const std::string& split) {
  std::vector<synth::Scene> scenes;
  for (const auto& d : sorted_dirs(run.scenes(split))) scenes.push_back(synth::read_scene(d));
  if (scenes.empty()) throw FormatError("no scenes under " + run.scenes(split).string() + "; run gen first");
  return scenes;
}

std::vector<const grid::Grid*> channel_ptrs(const synth::Scene& scene, const std::vector<std::string>& names) {
  std::vector<const grid::Grid*> ptrs;
  for (const auto& n : names) ptrs.push_back(&scene.channel(n));
  return ptrs;
}

grid::Grid vstack(const std::vector<grid::Grid>& parts) {
  std::size_t rows = 0;
  for (const auto& g : parts) {
    if (g.width() != parts.front().width()) throw DimensionError("grids to stack differ in width");
    rows += g.height();
  }
  grid::Grid out(rows, parts.front().width());
  std::size_t offset = 0;
  for (const auto& g : parts) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g.valid(i))
        out.set(offset + i, g[i]);
      else
        out.set_nodata(offset + i);
    }
    offset += g.size();
  }
  return out;
}

struct Epoch {
  std::size_t index;
  fs::path path;
};

std::vector<Epoch> epoch_checkpoints(const fs::path& dir) {
  static const std::regex pattern(R"(epoch_(\d+)\.sicw)");
  std::vector<Epoch> found;
  if (!fs::is_directory(dir)) throw FormatError("missing checkpoint directory " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.push_back({std::stoul(m[1].str()), e.path()});
  }
  std::sort(found.begin(), found.end(), [](const Epoch& a, const Epoch& b) { return a.index < b.index; });
  return found;
}

int cmd_gen(const RunConfig& cfg, const RunDir& run, std::ostream& out) {
  const auto params = cfg.scene_params();
  const auto split = cfg.split();
  const std::uint64_t base = cfg.scene_seed();
  std::size_t index = 0;
  for (const auto& [name, count] : {std::pair{"train", split.train}, {"val", split.val}, {"test", split.test}}) {
    const auto dir = run.scenes(name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (std::size_t i = 0; i < count; ++i, ++index)
      synth::write_scene(synth::gen_scene(params, base + index), dir / scene_dir_name(index));
    out << "gen: " << count << " " << name << " scenes -> " << dir.string() << "\n";
  }
  return kOk;
}

int cmd_train(const RunConfig& cfg, const RunDir& run, std::ostream& out) {
  const auto channels = cfg.channels();
  const auto mc = cfg.model();
  auto tc = cfg.train();
  tc.checkpoint_dir = run.checkpoints();
  for (const auto& e : epoch_checkpoints(run.checkpoints())) fs::remove(e.path);

  auto chips_of = [&](const std::string& split) {
    std::vector<supervision::TrainingChip> chips;
    for (const auto& scene : load_split(run, split))
      for (auto& c : supervision::scene_chips(scene, channels, mc.chip, cfg.chip_overlap())) chips.push_back(std::move(c));
    return chips;
  };
  const auto train_chips = chips_of("train");
  const auto val_chips = chips_of("val");
  out << "train: " << train_chips.size() << " train chips, " << val_chips.size() << " val chips\n";

  const auto result = supervision::train(tc, mc, train_chips, val_chips, [&](const supervision::EpochRecord& r) {
    out << "epoch " << r.epoch << " train_l1gw " << r.train_l1gw << " train_kl " << r.train_kl << " val_l1gw "
        << r.val_l1gw << "\n"
        << std::flush;
  });
  model::write_checkpoint(result.best, run.checkpoints() / "best.sicw");
  model::write_checkpoint(result.last, run.checkpoints() / "last.sicw");
  supervision::write_loss_log(result.history, run.metrics() / "loss_log.csv");
  out << "train: best epoch " << result.best_epoch << "\n";
  return kOk;
}

bayes::PredictiveModel load_predictive(const RunConfig& cfg, const RunDir& run, bayes::Estimator estimator,
                                       const std::optional<fs::path>& checkpoint, std::size_t burn_in) {
  bayes::PredictiveModel pm;
  pm.estimator = estimator;
  pm.config = cfg.model();
  pm.n_inferences = cfg.n_inferences();
  pm.seed = cfg.inference_seed();
  pm.dropout.keep = pm.config.dropout_keep;

  if (estimator == bayes::Estimator::EpochEnsemble) {
    for (const auto& e : epoch_checkpoints(run.checkpoints()))
      if (e.index > burn_in) pm.weights.push_back(model::read_checkpoint(e.path));
    if (pm.weights.empty())
      throw ConfigError("no epoch checkpoints after burn-in " + std::to_string(burn_in) + " in " +
                        run.checkpoints().string());
    pm.n_inferences = pm.weights.size();
    return pm;
  }
  auto weights = model::read_checkpoint(checkpoint.value_or(run.checkpoints() / "best.sicw"));
  const auto variant = model::detect_variant(weights);
  if (estimator == bayes::Estimator::BBB) {
    if (variant != model::Variant::Variational) throw ConfigError("bbb inference needs a variational checkpoint");
  } else if (variant == model::Variant::Variational) {
    weights = model::mean_weights(weights);
  }
  check_complete(weights, pm.config, model::detect_variant(weights));
  pm.weights.push_back(std::move(weights));
  return pm;
}

int cmd_infer(const RunConfig& cfg, const RunDir& run, std::ostream& out, const std::optional<std::string>& estimator_flag,
              const std::optional<fs::path>& checkpoint, const std::optional<std::size_t>& burn_in_flag) {
  const auto estimator = estimator_flag ? bayes::parse_estimator(*estimator_flag) : cfg.estimator();
  const auto pm = load_predictive(cfg, run, estimator, checkpoint, burn_in_flag.value_or(cfg.burn_in()));
  const auto channels = cfg.channels();
  const auto dest = run.predictions(estimator);
  fs::remove_all(dest);
  const auto dirs = sorted_dirs(run.scenes("test"));
  std::vector<synth::Scene> scenes;
  std::vector<bayes::SceneChannels> inputs;
  for (const auto& dir : dirs) scenes.push_back(synth::read_scene(dir));
  for (const auto& scene : scenes) inputs.push_back(channel_ptrs(scene, channels));
  const auto results = bayes::infer_scenes(pm, inputs, cfg.chip_overlap());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const auto target = dest / dirs[i].filename();
    fs::create_directories(target);
    grid::write_grid(results[i].mean, target / "mean.sicg");
    grid::write_grid(results[i].std, target / "std.sicg");
  }
  out << "infer: " << bayes::estimator_name(estimator) << " with " << pm.n_inferences << " inferences -> "
      << dest.string() << "\n";
  return kOk;
}

int cmd_fuse(const RunConfig& cfg, const RunDir& run, std::ostream& out, const std::vector<std::string>& layers,
             bool config_order, const std::optional<fs::path>& out_dir) {
  fusion::FusionStack stack;
  for (const auto& spec : layers) {
    const auto a = spec.find(':');
    const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
    if (b == std::string::npos || a == 0) throw ConfigError("--layer expects id:sic.sicg:sigma.sicg, got '" + spec + "'");
    stack.push_back({spec.substr(0, a), grid::read_grid(fs::path(spec.substr(a + 1, b - a - 1))),
                     grid::read_grid(fs::path(spec.substr(b + 1)))});
  }
  if (config_order) {
    const auto order = cfg.fusion_order();
    auto rank = [&](const fusion::Source& s) {
      const auto it = std::find(order.begin(), order.end(), s.id);
      if (it == order.end()) throw ConfigError("layer id '" + s.id + "' is not listed in fusion.order");
      return it - order.begin();
    };
    for (const auto& s : stack) rank(s);
    std::stable_sort(stack.begin(), stack.end(), [&](const auto& x, const auto& y) { return rank(x) < rank(y); });
  }
  const auto fused = fusion::fuse(stack);
  const auto dest = out_dir.value_or(run.grids() / "fused");
  fs::create_directories(dest);
  grid::write_grid(fused.sic, dest / "fused_sic.sicg");
  grid::write_grid(fused.sigma, dest / "fused_sigma.sicg");
  out << "fuse: " << stack.size() << " layers -> " << dest.string() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const RunDir& run, std::ostream& out, const std::optional<std::string>& estimator_flag) {
  const auto estimator = estimator_flag ? bayes::parse_estimator(*estimator_flag) : cfg.estimator();
  const auto pred_root = run.predictions(estimator);
  const int factor = cfg.eval_downsample();

  std::vector<grid::Grid> truth, mean, sd, ys, yhats;
  eval::DetectionCounts counts;
  std::array<double, 3> std_sum{}, std_count{};
  for (const auto& dir : sorted_dirs(run.scenes("test"))) {
    const auto scene = synth::read_scene(dir);
    const auto pdir = pred_root / dir.filename();
    auto m = grid::read_grid(pdir / "mean.sicg");
    auto s = grid::read_grid(pdir / "std.sicg");
    if (!m.same_extent(scene.truth_sic) || !s.same_extent(scene.truth_sic))
      throw DimensionError("prediction extent differs from scene " + dir.string());
    counts += eval::detection_counts(m, eval::truth_ice_mask(scene.truth_sic, scene.region_chart), scene.region_chart);
    ys.push_back(grid::downsample_mean(scene.truth_sic, factor));
    yhats.push_back(grid::downsample_mean(m, factor));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto r = static_cast<std::size_t>(synth::region_at(scene.region_chart, i));
      if (r < 3 && s.valid(i)) {
        std_sum[r] += s[i];
        std_count[r] += 1;
      }
    }
    truth.push_back(scene.truth_sic);
    mean.push_back(std::move(m));
    sd.push_back(std::move(s));
  }

  eval::MetricsReport report;
  report.ece = eval::ece_table(vstack(truth), vstack(mean), vstack(sd), cfg.ece());
  report.features = eval::feature_metrics(counts);
  report.regression = eval::regression_metrics(ys, yhats);
  for (std::size_t r = 0; r < 3; ++r)
    report.mean_std_by_region.push_back(std_count[r] > 0 ? std_sum[r] / std_count[r] : std::nan(""));

  const auto dest = run.metrics() / std::string(bayes::estimator_name(estimator));
  fs::create_directories(dest);
  eval::write_report(report, dest / "report.json");
  eval::write_ece_csv(report.ece, dest / "ece.csv");
  out << "eval: ece " << report.ece.ece << " overall accuracy " << report.features.overall << " r2 "
      << report.regression.r2 << " -> " << dest.string() << "\n";
  return kOk;
}

int cmd_gradcheck(std::ostream& out, double tolerance, std::uint64_t seed) {
  const auto [report, worst] = tiny_model_gradcheck(seed, tolerance);
  out << "gradcheck: " << report.checked << " entries, max rel error " << report.max_rel_error << " (worst " << worst
      << "[" << report.worst_index << "])\n";
  if (!report.passed) {
    out << "gradcheck: FAILED tolerance " << tolerance << "\n";
    return kNumericalError;
  }
  return kOk;
}

}  // namespace

ModelGradCheck tiny_model_gradcheck(std::uint64_t seed, double tolerance) {
  model::ModelConfig cfg;
  cfg.chip = 16;
  cfg.patch = 4;
  cfg.window = 2;
  cfg.hidden = 8;
  cfg.heads = 2;

  std::vector<std::string> names;
  std::vector<nk::Tensor> tensors;
  std::uint64_t stream_seed = seed;
  auto draw = [&](nk::Shape shape, auto&& sample) {
    nk::Tensor t(std::move(shape));
    Stream s(stream_seed++);
    for (double& v : t.data()) v = sample(s);
    return t;
  };
  for (const auto& spec : model::parameter_specs(cfg)) {
    const double sd = spec.kind == model::ParamKind::Attention ? 0.4 : 0.3;
    names.push_back(spec.name);
    if (spec.kind == model::ParamKind::NormGain)
      tensors.push_back(draw(spec.shape, [](Stream& s) { return s.uniform(0.5, 1.5); }));
    else
      tensors.push_back(draw(spec.shape, [sd](Stream& s) { return sd * s.normal(); }));
  }
  stream_seed = 7;
  const auto x = draw({1, cfg.channels, cfg.chip, cfg.chip}, [](Stream& s) { return s.uniform(0.0, 1.0); });
  const auto w = draw({1, 1, cfg.chip, cfg.chip}, [](Stream& s) { return s.uniform(0.5, 1.5); });

  const auto report = nk::grad_check(
      [&](nk::Graph& g, std::span<const nk::Var> vars) {
        model::BoundWeights bound;
        for (std::size_t i = 0; i < vars.size(); ++i) bound.emplace(names[i], vars[i]);
        const auto y = model::forward(g.constant(x), bound, cfg);
        return nk::scale(nk::mean(nk::mul(y, g.constant(w))), 0.01);
      },
      tensors, 1e-4, tolerance);
  return {report, names[report.worst_param]};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sea-ice concentration mapping with a Bayesian high-resolution transformer", "icefuse"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_file;
  std::vector<std::string> overrides;
  std::string runs_dir = "runs";
  std::string name = "default";
  app.add_option("-c,--config", config_file, "JSON run configuration");
  app.add_option("--set", overrides, "override a config value, e.g. train.epochs=2")->take_all();
  app.add_option("--runs-dir", runs_dir, "parent of run directories")->capture_default_str();
  app.add_option("-n,--name", name, "run name")->capture_default_str();

  auto* gen = app.add_subcommand("gen", "generate synthetic train/val/test scenes");
  auto* train = app.add_subcommand("train", "train on the generated scenes");
  auto* infer = app.add_subcommand("infer", "predict mean and std for the test scenes");
  auto* fuse = app.add_subcommand("fuse", "stack SIC layers by priority");
  auto* evaluate = app.add_subcommand("eval", "score predictions against the synthetic truth");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full model");

  std::optional<std::string> estimator;
  std::optional<std::string> checkpoint;
  std::optional<std::size_t> burn_in;
  infer->add_option("--estimator", estimator, "bbb, mc_dropout, epoch_ensemble or deterministic");
  infer->add_option("--checkpoint", checkpoint, "weights file (default checkpoints/best.sicw)");
  infer->add_option("--burn-in", burn_in, "epoch-ensemble members skip epochs <= this");
  evaluate->add_option("--estimator", estimator, "which prediction set to score");

  std::vector<std::string> layers;
  bool config_order = false;
  std::optional<std::string> fuse_out;
  fuse->add_option("--layer", layers, "id:sic.sicg:sigma.sicg, lowest priority first")->required()->take_all();
  fuse->add_flag("--config-order", config_order, "reorder layers by fusion.order");
  fuse->add_option("-o,--out", fuse_out, "output directory (default grids/fused)");

  double tolerance = 1e-4;
  std::uint64_t gc_seed = 100;
  gradcheck->add_option("--tolerance", tolerance)->capture_default_str();
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (gradcheck->parsed()) return cmd_gradcheck(out, tolerance, gc_seed);

    const auto cfg = RunConfig::load(config_file ? std::optional<fs::path>(*config_file) : std::nullopt, overrides);
    const RunDir run{fs::path(runs_dir) / name};
    run.create(cfg);
    if (gen->parsed()) return cmd_gen(cfg, run, out);
    if (train->parsed()) return cmd_train(cfg, run, out);
    if (infer->parsed())
      return cmd_infer(cfg, run, out, estimator, checkpoint ? std::optional<fs::path>(*checkpoint) : std::nullopt, burn_in);
    if (fuse->parsed())
      return cmd_fuse(cfg, run, out, layers, config_order, fuse_out ? std::optional<fs::path>(*fuse_out) : std::nullopt);
    if (evaluate->parsed()) return cmd_eval(cfg, run, out, estimator);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace icefuse::cli
