#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icefuse/gridstore/grid.hpp"

namespace icefuse::synth {

enum class RegionClass : std::uint8_t { OpenWater = 0, MIZ = 1, IcePack = 2, NoData = 3 };

inline constexpr std::uint8_t kRegionClassCount = 4;

/// Region code stored in a region-chart grid cell (nodata cells map to NoData).
RegionClass region_at(const grid::Grid& chart, std::size_t i) noexcept;
const char* region_name(RegionClass r) noexcept;

struct SceneParams {
  std::size_t size = 64;
  // Floes are disks of 100% ice scattered over the marginal ice zone.
  double floe_density = 0.004;  // expected floes per MIZ cell
  double floe_radius_min = 1.0;
  double floe_radius_max = 10.0;
  // Leads are straight open-water cracks through the pack.
  double lead_density = 0.03;  // expected leads per cell of scene side
  double lead_width_min = 1.0;
  double lead_width_max = 2.0;
  double speckle_variance = 0.1;  // multiplicative, unit mean
  double wind_streak_amplitude = 0.15;
  double thermal_band_amplitude = 0.0;  // RCM-like scenes only
  double pm_blur_radius = 3.0;
  double pm_noise_sd = 0.02;
  int label_factor = 8;
  double miz_label_bias = 0.0;
  double miz_label_noise_sd = 0.0;

  /// Throws ContractError when a field is out of range.
  void validate() const;
  friend bool operator==(const SceneParams&, const SceneParams&) = default;
};

/// Sensor-flavoured variants of a base parameter set: "sentinel1", "rcm", "amsr2".
SceneParams sensor_params(SceneParams base, const std::string& sensor);

struct NamedGrid {
  std::string name;
  grid::Grid values;
};

/// Channel names produced for every scene, in storage order.
const std::vector<std::string>& channel_names();

struct Scene {
  grid::Grid truth_sic;
  std::vector<NamedGrid> channels;
  grid::Grid coarse_label;
  grid::Grid region_chart;
  std::uint64_t seed = 0;
  SceneParams params;

  const grid::Grid& channel(const std::string& name) const;
};

/// Pure function of (params, seed).
Scene gen_scene(const SceneParams& params, std::uint64_t seed);

/// Perturbs the coarse label on MIZ cells only: label + bias + noise, where
/// the zero-mean noise is drawn once per label block; clamped to [0, 100].
grid::Grid corrupt_label(const Scene& scene, double miz_bias, double miz_noise_sd, std::uint64_t seed);

/// The label used for training: corrupt_label with the scene's own MIZ
/// bias/noise settings and a seed derived from the scene seed.
grid::Grid training_label(const Scene& scene);

/// Directory of SICG grids plus manifest.json (seed, params, channel list).
void write_scene(const Scene& scene, const std::filesystem::path& dir);
Scene read_scene(const std::filesystem::path& dir);

}  // namespace icefuse::synth
