#include "icefuse/synthgen/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <string>

#include "icefuse/common/error.hpp"
#include "icefuse/common/rng.hpp"
#include "icefuse/gridstore/chips.hpp"
#include "icefuse/gridstore/sicg.hpp"

namespace icefuse::synth {

using grid::Grid;

RegionClass region_at(const Grid& chart, std::size_t i) noexcept {
  if (!chart.valid(i)) return RegionClass::NoData;
  const double v = chart[i];
  if (v == 0.0) return RegionClass::OpenWater;
  if (v == 1.0) return RegionClass::MIZ;
  if (v == 2.0) return RegionClass::IcePack;
  return RegionClass::NoData;
}

const char* region_name(RegionClass r) noexcept {
  switch (r) {
    case RegionClass::OpenWater: return "open_water";
    case RegionClass::MIZ: return "miz";
    case RegionClass::IcePack: return "ice_pack";
    case RegionClass::NoData: return "nodata";
  }
  return "nodata";
}

void SceneParams::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("scene params: " + what); };
  if (label_factor < 1) fail("label_factor must be >= 1");
  if (size < 4 * static_cast<std::size_t>(label_factor)) fail("size must be >= 4 * label_factor");
  if (floe_density < 0 || lead_density < 0) fail("densities must be >= 0");
  if (floe_radius_min < 1 || floe_radius_max < floe_radius_min) fail("floe radius range must satisfy 1 <= min <= max");
  if (lead_width_min <= 0 || lead_width_max < lead_width_min) fail("lead width range must satisfy 0 < min <= max");
  if (speckle_variance < 0 || wind_streak_amplitude < 0 || thermal_band_amplitude < 0 || pm_blur_radius < 0 ||
      pm_noise_sd < 0 || miz_label_noise_sd < 0)
    fail("noise amplitudes must be >= 0");
}

SceneParams sensor_params(SceneParams base, const std::string& sensor) {
  if (sensor == "sentinel1") {
    base.thermal_band_amplitude = 0.0;
  } else if (sensor == "rcm") {
    base.thermal_band_amplitude = std::max(base.thermal_band_amplitude, 0.15);
    base.speckle_variance *= 1.5;
  } else if (sensor == "amsr2") {
    base.pm_noise_sd = std::max(base.pm_noise_sd, 0.04);
  } else {
    throw ContractError("unknown sensor '" + sensor + "' (expected sentinel1, rcm or amsr2)");
  }
  return base;
}

const std::vector<std::string>& channel_names() {
  static const std::vector<std::string> names{"hh", "hv", "cross", "pm_h", "pm_v"};
  return names;
}

const Grid& Scene::channel(const std::string& name) const {
  for (const auto& c : channels)
    if (c.name == name) return c.values;
  throw ContractError("scene has no channel '" + name + "'");
}

namespace {

// Marsaglia-Tsang gamma sampler with unit scale, shape >= 1.
double gamma_unit(Stream& s, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = s.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = s.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(std::max(u, 1e-300)) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Expected-count draw: floor(mean) plus one more with probability frac(mean).
std::size_t draw_count(Stream& s, double mean) {
  const double base = std::floor(mean);
  return static_cast<std::size_t>(base) + (s.uniform() < mean - base ? 1 : 0);
}

Grid box_blur(const Grid& g, double radius) {
  const auto r = static_cast<long>(std::lround(radius));
  if (r <= 0) return g;
  const auto h = static_cast<long>(g.height());
  const auto w = static_cast<long>(g.width());
  Grid out(g.height(), g.width());
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      double total = 0.0;
      int n = 0;
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          const long yy = std::clamp(y + dy, 0L, h - 1);
          const long xx = std::clamp(x + dx, 0L, w - 1);
          total += g.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          ++n;
        }
      out.set(static_cast<std::size_t>(y), static_cast<std::size_t>(x), total / n);
    }
  return out;
}

}  // namespace

Scene gen_scene(const SceneParams& params, std::uint64_t seed) {
  params.validate();
  const std::size_t n = params.size;
  const double nd = static_cast<double>(n);

  Scene scene;
  scene.seed = seed;
  scene.params = params;
  scene.truth_sic = Grid(n, n, 0.0);
  scene.region_chart = Grid(n, n, static_cast<double>(RegionClass::OpenWater));

  // Geometry: a pack-ice disk, a marginal-ice-zone annulus around it, open
  // water outside. The centre may lie off-grid so scenes range from pure
  // water through edge crossings to pure pack.
  Stream geo(derive_key(seed, "geometry"));
  const double cx = geo.uniform(-0.5 * nd, 1.5 * nd);
  const double cy = geo.uniform(-0.5 * nd, 1.5 * nd);
  const double pack_radius = geo.uniform(0.2 * nd, 1.0 * nd);
  const double miz_width = geo.uniform(0.15 * nd, 0.35 * nd);

  std::vector<std::size_t> miz_cells;
  std::size_t pack_cells = 0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const double d = std::hypot(static_cast<double>(c) + 0.5 - cx, static_cast<double>(r) + 0.5 - cy);
      const std::size_t i = r * n + c;
      if (d < pack_radius) {
        scene.region_chart.set(i, static_cast<double>(RegionClass::IcePack));
        scene.truth_sic.set(i, 100.0);
        ++pack_cells;
      } else if (d < pack_radius + miz_width) {
        scene.region_chart.set(i, static_cast<double>(RegionClass::MIZ));
        const double t = (d - pack_radius) / miz_width;
        scene.truth_sic.set(i, 100.0 * (1.0 - t));
        miz_cells.push_back(i);
      }
    }

  // Leads through the pack; capped so pack cells stay > 80% on >= 92% of cells.
  Stream leads(derive_key(seed, "leads"));
  const std::size_t lead_count = draw_count(leads, params.lead_density * nd);
  const auto lead_cap = static_cast<std::size_t>(0.08 * static_cast<double>(pack_cells));
  std::size_t lead_cells = 0;
  for (std::size_t k = 0; k < lead_count; ++k) {
    const double px = leads.uniform(0.0, nd);
    const double py = leads.uniform(0.0, nd);
    const double theta = leads.uniform(0.0, std::numbers::pi);
    const double half_len = 0.5 * leads.uniform(0.3 * nd, nd);
    const double half_width = 0.5 * leads.uniform(params.lead_width_min, params.lead_width_max);
    const double ux = std::cos(theta);
    const double uy = std::sin(theta);
    for (std::size_t r = 0; r < n && lead_cells < lead_cap; ++r)
      for (std::size_t c = 0; c < n && lead_cells < lead_cap; ++c) {
        const std::size_t i = r * n + c;
        if (region_at(scene.region_chart, i) != RegionClass::IcePack || scene.truth_sic[i] == 0.0) continue;
        const double dx = static_cast<double>(c) + 0.5 - px;
        const double dy = static_cast<double>(r) + 0.5 - py;
        const double along = dx * ux + dy * uy;
        const double across = -dx * uy + dy * ux;
        if (std::abs(along) <= half_len && std::abs(across) <= half_width) {
          scene.truth_sic.set(i, 0.0);
          ++lead_cells;
        }
      }
  }

  // Floes: solid disks clipped to the MIZ.
  Stream floes(derive_key(seed, "floes"));
  const std::size_t floe_count =
      miz_cells.empty() ? 0 : draw_count(floes, params.floe_density * static_cast<double>(miz_cells.size()));
  for (std::size_t k = 0; k < floe_count; ++k) {
    const std::size_t centre = miz_cells[floes.below(miz_cells.size())];
    const double radius = floes.uniform(params.floe_radius_min, params.floe_radius_max);
    const double fx = static_cast<double>(centre % n) + 0.5;
    const double fy = static_cast<double>(centre / n) + 0.5;
    for (std::size_t i : miz_cells) {
      const double dx = static_cast<double>(i % n) + 0.5 - fx;
      const double dy = static_cast<double>(i / n) + 0.5 - fy;
      if (dx * dx + dy * dy <= radius * radius) scene.truth_sic.set(i, 100.0);
    }
  }

  // Sensor channels: monotone in concentration, then speckle, wind streaks
  // over water and horizontal thermal banding.
  Stream noise(derive_key(seed, "channels"));
  const double streak_angle = noise.uniform(0.0, std::numbers::pi);
  const double streak_period = noise.uniform(6.0, 14.0);
  const double band_period = noise.uniform(8.0, 20.0);
  const double speckle_shape = params.speckle_variance > 0 ? 1.0 / params.speckle_variance : 0.0;
  Grid hh(n, n);
  Grid hv(n, n);
  Grid cross(n, n);
  Grid pm_h(n, n);
  Grid pm_v(n, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t i = r * n + c;
      const double s = scene.truth_sic[i] / 100.0;
      double hh_v = 0.4 + 0.6 * s;
      double hv_v = 0.1 + 0.9 * s;
      if (speckle_shape > 0) {
        hh_v *= gamma_unit(noise, speckle_shape) / speckle_shape;
        hv_v *= gamma_unit(noise, speckle_shape) / speckle_shape;
      }
      const double phase = 2.0 * std::numbers::pi *
                           (static_cast<double>(c) * std::cos(streak_angle) + static_cast<double>(r) * std::sin(streak_angle)) /
                           streak_period;
      const double streak = params.wind_streak_amplitude * (1.0 - s) * (0.5 + 0.5 * std::sin(phase));
      hh_v += streak;
      hv_v += 0.3 * streak;
      const double band = params.thermal_band_amplitude *
                          (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(r) / band_period));
      hv_v += band;
      hh.set(i, hh_v);
      hv.set(i, hv_v);
      cross.set(i, hh_v * hv_v);
      pm_h.set(i, 0.3 + 0.5 * s);
      pm_v.set(i, 0.6 + 0.3 * s);
    }
  pm_h = box_blur(pm_h, params.pm_blur_radius);
  pm_v = box_blur(pm_v, params.pm_blur_radius);
  for (std::size_t i = 0; i < pm_h.size(); ++i) {
    pm_h.set(i, pm_h[i] + params.pm_noise_sd * noise.normal());
    pm_v.set(i, pm_v[i] + params.pm_noise_sd * noise.normal());
  }
  scene.channels = {{"hh", std::move(hh)}, {"hv", std::move(hv)}, {"cross", std::move(cross)},
                    {"pm_h", std::move(pm_h)}, {"pm_v", std::move(pm_v)}};

  scene.coarse_label = grid::upsample_nearest(grid::downsample_mean(scene.truth_sic, params.label_factor),
                                              params.label_factor, n, n);
  return scene;
}

Grid corrupt_label(const Scene& scene, double miz_bias, double miz_noise_sd, std::uint64_t seed) {
  Grid label = scene.coarse_label;
  const auto f = static_cast<std::size_t>(scene.params.label_factor);
  const std::size_t blocks_per_row = (label.width() + f - 1) / f;
  const CounterRng rng(derive_key(seed, "label-noise"));
  for (std::size_t r = 0; r < label.height(); ++r)
    for (std::size_t c = 0; c < label.width(); ++c) {
      const std::size_t i = r * label.width() + c;
      if (region_at(scene.region_chart, i) != RegionClass::MIZ || !label.valid(i)) continue;
      const std::size_t block = (r / f) * blocks_per_row + c / f;
      const double noise = miz_noise_sd > 0 ? miz_noise_sd * rng.normal(block) : 0.0;
      label.set(i, std::clamp(label[i] + miz_bias + noise, 0.0, 100.0));
    }
  return label;
}

Grid training_label(const Scene& scene) {
  return corrupt_label(scene, scene.params.miz_label_bias, scene.params.miz_label_noise_sd,
                       derive_key(scene.seed, "training-label"));
}

namespace {

nlohmann::json params_to_json(const SceneParams& p) {
  return {{"size", p.size},
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
          {"miz_label_noise_sd", p.miz_label_noise_sd}};
}

SceneParams params_from_json(const nlohmann::json& j) {
  SceneParams p;
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
  return p;
}

}  // namespace

void write_scene(const Scene& scene, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  grid::write_grid(scene.truth_sic, dir / "truth.sicg");
  grid::write_grid(scene.coarse_label, dir / "label.sicg");
  grid::write_grid(scene.region_chart, dir / "region.sicg");
  nlohmann::json channels = nlohmann::json::array();
  for (const auto& c : scene.channels) {
    grid::write_grid(c.values, dir / (c.name + ".sicg"));
    channels.push_back(c.name);
  }
  const nlohmann::json manifest{
      {"seed", scene.seed}, {"params", params_to_json(scene.params)}, {"channels", channels}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Scene read_scene(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest in " + dir.string() + ": " + e.what());
  }
  Scene scene;
  try {
    scene.seed = manifest.at("seed").get<std::uint64_t>();
    scene.params = params_from_json(manifest.at("params"));
    for (const auto& name : manifest.at("channels"))
      scene.channels.push_back({name.get<std::string>(), grid::read_grid(dir / (name.get<std::string>() + ".sicg"))});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest in " + dir.string() + ": " + e.what());
  }
  scene.truth_sic = grid::read_grid(dir / "truth.sicg");
  scene.coarse_label = grid::read_grid(dir / "label.sicg");
  scene.region_chart = grid::read_grid(dir / "region.sicg");
  return scene;
}

}  // namespace icefuse::synth
