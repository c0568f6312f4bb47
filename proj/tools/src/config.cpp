#include "icefuse/cli/config.hpp"

#include <fstream>

#include "icefuse/common/error.hpp"

namespace icefuse::cli {

using nlohmann::json;

namespace {

json defaults() {
  const model::ModelConfig m;
  const supervision::TrainConfig t;
  const synth::SceneParams p;
  return {
      {"model",
       {{"channels", {"hh", "hv", "cross"}},
        {"chip", m.chip},
        {"patch", m.patch},
        {"window", m.window},
        {"hidden", m.hidden},
        {"heads", m.heads},
        {"stages", m.stages},
        {"mlp_ratio", m.mlp_ratio},
        {"dropout_keep", m.dropout_keep}}},
      {"train",
       {{"epochs", t.epochs},
        {"lr", t.adam.learning_rate},
        {"batch_size", t.batch_size},
        {"kl_scale", t.kl_scale},
        {"kl_per_batch", t.kl_per_batch},
        {"seed", t.seed},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"epsilon", t.adam.epsilon},
        {"variant", "bbb"},
        {"dropout", false},
        {"chip_overlap", 0.2},
        {"geo_weights", {{"open_water", t.geo.open_water}, {"ice_pack", t.geo.ice_pack}, {"miz", t.geo.miz}}}}},
      {"bayes", {{"estimator", "bbb"}, {"n_inferences", 30}, {"seed", 0}, {"burn_in", 0}}},
      {"synth",
       {{"seed", 0},
        {"sensor", "sentinel1"},
        {"train_scenes", 160},
        {"val_scenes", 20},
        {"test_scenes", 20},
        {"params",
         {{"size", p.size},
          {"floe_density", p.floe_density},
          {"floe_radius_min", p.floe_radius_min},
          {"floe_radius_max", p.floe_radius_max},
          {"lead_density", p.lead_density},
          {"lead_width_min", p.lead_width_min},
          {"lead_width_max", p.lead_width_max},
          {"speckle_variance", p.speckle_variance},
          {"wind_streak_amplitude", p.wind_streak_amplitude},
          {"thermal_band_amplitude", p.thermal_band_amplitude},
          {"pm_blur_radius", p.pm_blur_radius},
          {"pm_noise_sd", p.pm_noise_sd},
          {"label_factor", p.label_factor},
          {"miz_label_bias", p.miz_label_bias},
          {"miz_label_noise_sd", p.miz_label_noise_sd}}}}},
      {"fusion", {{"order", {"amsr2", "rcm", "sentinel1"}}}},
      {"eval", {{"bins", 10}, {"sigma_floor", 1e-8}, {"expected", "midpoint"}, {"downsample", 8}}},
  };
}

std::string type_name(const json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_unsigned() || j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

bool compatible(const json& want, const json& got) {
  if (want.is_number_unsigned()) return got.is_number_unsigned() || (got.is_number_integer() && got.get<long long>() >= 0);
  if (want.is_number_integer()) return got.is_number_integer();
  if (want.is_number_float()) return got.is_number();
  if (want.is_array()) {
    if (!got.is_array()) return false;
    for (const auto& e : got)
      if (!want.empty() && type_name(e) != type_name(want.front())) return false;
    return true;
  }
  return type_name(want) == type_name(got);
}

void merge_into(json& base, const json& doc, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " key '" + prefix + "'") + " must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, value, path);
      continue;
    }
    if (!compatible(slot, value))
      throw ConfigError("config key '" + path + "' expects " + type_name(slot) + ", got " + type_name(value));
    slot = slot.is_number_float() ? json(value.get<double>()) : value;
  }
}

template <typename T>
T get(const json& doc, const char* section, const char* key) {
  return doc.at(section).at(key).get<T>();
}

}  // namespace

RunConfig::RunConfig() : doc_(defaults()) {}

RunConfig RunConfig::load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    json doc;
    try {
      in >> doc;
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + file->string() + " is not valid JSON: " + e.what());
    }
    cfg.merge(doc);
  }
  for (const auto& o : overrides) cfg.set(o);
  cfg.validate();
  return cfg;
}

void RunConfig::merge(const json& doc) {
  if (doc.is_null()) return;
  merge_into(doc_, doc, "");
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;  // bare strings need no quotes

  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge(patch);
}

void RunConfig::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << dump();
}

model::ModelConfig RunConfig::model() const {
  model::ModelConfig m;
  const auto& j = doc_.at("model");
  m.channels = j.at("channels").size();
  m.chip = j.at("chip").get<std::size_t>();
  m.patch = j.at("patch").get<std::size_t>();
  m.window = j.at("window").get<std::size_t>();
  m.hidden = j.at("hidden").get<std::size_t>();
  m.heads = j.at("heads").get<std::size_t>();
  m.stages = j.at("stages").get<std::size_t>();
  m.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  m.dropout_keep = j.at("dropout_keep").get<double>();
  return m;
}

std::vector<std::string> RunConfig::channels() const { return doc_.at("model").at("channels").get<std::vector<std::string>>(); }

supervision::TrainConfig RunConfig::train() const {
  const auto& j = doc_.at("train");
  supervision::TrainConfig t;
  t.epochs = j.at("epochs").get<std::size_t>();
  t.adam.learning_rate = j.at("lr").get<double>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.kl_scale = j.at("kl_scale").get<double>();
  t.kl_per_batch = j.at("kl_per_batch").get<bool>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.adam.beta1 = j.at("beta1").get<double>();
  t.adam.beta2 = j.at("beta2").get<double>();
  t.adam.epsilon = j.at("epsilon").get<double>();
  const auto variant = j.at("variant").get<std::string>();
  if (variant == "bbb")
    t.variant = model::Variant::Variational;
  else if (variant == "deterministic")
    t.variant = model::Variant::Deterministic;
  else
    throw ConfigError("train.variant must be bbb or deterministic, got '" + variant + "'");
  if (j.at("dropout").get<bool>()) t.dropout_keep = model().dropout_keep;
  const auto& gw = j.at("geo_weights");
  t.geo = {gw.at("open_water").get<double>(), gw.at("ice_pack").get<double>(), gw.at("miz").get<double>()};
  return t;
}

double RunConfig::chip_overlap() const { return get<double>(doc_, "train", "chip_overlap"); }

bayes::Estimator RunConfig::estimator() const {
  return bayes::parse_estimator(get<std::string>(doc_, "bayes", "estimator"));
}
std::size_t RunConfig::n_inferences() const { return get<std::size_t>(doc_, "bayes", "n_inferences"); }
std::uint64_t RunConfig::inference_seed() const { return get<std::uint64_t>(doc_, "bayes", "seed"); }
std::size_t RunConfig::burn_in() const { return get<std::size_t>(doc_, "bayes", "burn_in"); }

synth::SceneParams RunConfig::scene_params() const {
  const auto& j = doc_.at("synth").at("params");
  synth::SceneParams p;
  p.size = j.at("size").get<std::size_t>();
  p.floe_density = j.at("floe_density").get<double>();
  p.floe_radius_min = j.at("floe_radius_min").get<double>();
  p.floe_radius_max = j.at("floe_radius_max").get<double>();
  p.lead_density = j.at("lead_density").get<double>();
  p.lead_width_min = j.at("lead_width_min").get<double>();
  p.lead_width_max = j.at("lead_width_max").get<double>();
  p.speckle_variance = j.at("speckle_variance").get<double>();
  p.wind_streak_amplitude = j.at("wind_streak_amplitude").get<double>();
  p.thermal_band_amplitude = j.at("thermal_band_amplitude").get<double>();
  p.pm_blur_radius = j.at("pm_blur_radius").get<double>();
  p.pm_noise_sd = j.at("pm_noise_sd").get<double>();
  p.label_factor = j.at("label_factor").get<int>();
  p.miz_label_bias = j.at("miz_label_bias").get<double>();
  p.miz_label_noise_sd = j.at("miz_label_noise_sd").get<double>();
  return synth::sensor_params(p, get<std::string>(doc_, "synth", "sensor"));
}

std::uint64_t RunConfig::scene_seed() const { return get<std::uint64_t>(doc_, "synth", "seed"); }

DataSplit RunConfig::split() const {
  return {get<std::size_t>(doc_, "synth", "train_scenes"), get<std::size_t>(doc_, "synth", "val_scenes"),
          get<std::size_t>(doc_, "synth", "test_scenes")};
}

std::vector<std::string> RunConfig::fusion_order() const {
  return doc_.at("fusion").at("order").get<std::vector<std::string>>();
}

eval::EceConfig RunConfig::ece() const {
  return {get<std::size_t>(doc_, "eval", "bins"), get<double>(doc_, "eval", "sigma_floor"),
          eval::parse_expected_confidence(get<std::string>(doc_, "eval", "expected"))};
}

int RunConfig::eval_downsample() const { return get<int>(doc_, "eval", "downsample"); }

void RunConfig::validate() const {
  model().validate();
  const auto names = channels();
  if (names.empty()) throw ConfigError("model.channels must not be empty");
  for (const auto& n : names)
    if (std::find(synth::channel_names().begin(), synth::channel_names().end(), n) == synth::channel_names().end())
      throw ConfigError("model.channels: unknown channel '" + n + "'");
  train().validate();
  const double overlap = chip_overlap();
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("train.chip_overlap must lie in [0, 1)");
  estimator();
  if (n_inferences() == 0) throw ConfigError("bayes.n_inferences must be positive");
  try {
    scene_params().validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("synth.params: ") + e.what());
  }
  if (scene_params().size < model().chip)
    throw ConfigError("synth.params.size must be at least model.chip");
  if (split().train == 0 || split().val == 0) throw ConfigError("synth needs at least one train and one val scene");
  ece().validate();
  if (eval_downsample() < 1) throw ConfigError("eval.downsample must be >= 1");
}

}  // namespace icefuse::cli
