#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "icefuse/common/error.hpp"
#include "icefuse/gridstore/chips.hpp"
#include "icefuse/synthgen/scene.hpp"

using namespace icefuse;
using namespace icefuse::synth;
using grid::Grid;

namespace {

bool scenes_identical(const Scene& a, const Scene& b) {
  if (!a.truth_sic.bitwise_equal(b.truth_sic) || !a.coarse_label.bitwise_equal(b.coarse_label) ||
      !a.region_chart.bitwise_equal(b.region_chart) || a.channels.size() != b.channels.size())
    return false;
  for (std::size_t k = 0; k < a.channels.size(); ++k)
    if (a.channels[k].name != b.channels[k].name || !a.channels[k].values.bitwise_equal(b.channels[k].values))
      return false;
  return a.seed == b.seed && a.params == b.params;
}

}  // namespace

TEST_CASE("gen_scene is deterministic in (params, seed)") {
  SceneParams p;
  CHECK(scenes_identical(gen_scene(p, 7), gen_scene(p, 7)));
  CHECK_FALSE(gen_scene(p, 7).truth_sic.bitwise_equal(gen_scene(p, 8).truth_sic));
}

TEST_CASE("without floes and leads truth is {0,100} plus the MIZ ring") {
  SceneParams p;
  p.floe_density = 0;
  p.lead_density = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = gen_scene(p, seed);
    for (std::size_t i = 0; i < s.truth_sic.size(); ++i) {
      const auto r = region_at(s.region_chart, i);
      if (r == RegionClass::OpenWater) CHECK(s.truth_sic[i] == 0.0);
      if (r == RegionClass::IcePack) CHECK(s.truth_sic[i] == 100.0);
      if (r == RegionClass::MIZ) {
        CHECK(s.truth_sic[i] >= 0.0);
        CHECK(s.truth_sic[i] <= 100.0);
      }
    }
  }
}

TEST_CASE("coarse label is the upsampled block mean of truth") {
  SceneParams p;
  p.label_factor = 8;
  const Scene s = gen_scene(p, 3);
  const Grid expect = grid::upsample_nearest(grid::downsample_mean(s.truth_sic, 8), 8, p.size, p.size);
  CHECK(s.coarse_label.bitwise_equal(expect));
}

TEST_CASE("region/threshold consistency across seeds") {
  SceneParams p;
  std::size_t pack = 0;
  std::size_t pack_low = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Scene s = gen_scene(p, seed);
    std::size_t scene_pack = 0;
    std::size_t scene_low = 0;
    for (std::size_t i = 0; i < s.truth_sic.size(); ++i) {
      const auto r = region_at(s.region_chart, i);
      CHECK(r != RegionClass::NoData);
      if (r == RegionClass::OpenWater) CHECK(s.truth_sic[i] < 15.0);
      if (r == RegionClass::IcePack) {
        ++scene_pack;
        scene_low += s.truth_sic[i] <= 80.0 ? 1 : 0;
      }
    }
    if (scene_pack) CHECK(static_cast<double>(scene_low) < 0.1 * static_cast<double>(scene_pack));
    pack += scene_pack;
    pack_low += scene_low;
  }
  CHECK(pack > 0);
  CHECK(pack_low > 0);  // leads are actually generated
}

TEST_CASE("hv-like channels are brighter over pack than over open water") {
  SceneParams p;
  p.speckle_variance = 0;
  p.wind_streak_amplitude = 0;
  p.thermal_band_amplitude = 0;
  p.pm_noise_sd = 0;
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Scene s = gen_scene(p, seed);
    for (const char* name : {"hv", "hh", "cross"}) {
      const Grid& ch = s.channel(name);
      double ice = 0, water = 0;
      int ni = 0, nw = 0;
      for (std::size_t i = 0; i < ch.size(); ++i) {
        const auto r = region_at(s.region_chart, i);
        if (r == RegionClass::IcePack) ice += ch[i], ++ni;
        if (r == RegionClass::OpenWater) water += ch[i], ++nw;
      }
      if (ni && nw) {
        CHECK(ice / ni > water / nw);
        ++compared;
      }
    }
  }
  CHECK(compared > 0);
}

TEST_CASE("corrupt_label touches MIZ cells only") {
  SceneParams p;
  const Scene s = gen_scene(p, 11);
  CHECK(corrupt_label(s, 0.0, 0.0, 1).bitwise_equal(s.coarse_label));

  const Grid shifted = corrupt_label(s, -10.0, 3.0, 1);
  double before = 0, after = 0;
  int miz = 0;
  for (std::size_t i = 0; i < s.coarse_label.size(); ++i) {
    const auto r = region_at(s.region_chart, i);
    if (r != RegionClass::MIZ) {
      CHECK(shifted[i] == s.coarse_label[i]);
      continue;
    }
    CHECK(shifted[i] >= 0.0);
    CHECK(shifted[i] <= 100.0);
    before += s.coarse_label[i];
    after += shifted[i];
    ++miz;
  }
  REQUIRE(miz > 0);
}

TEST_CASE("MIZ bias shifts the masked mean by the bias when clamping is inactive") {
  // Masked-mean oracle: average over MIZ cells whose label stays inside
  // [10, 90] so a -10 shift with no noise cannot clamp.
  SceneParams p;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = gen_scene(p, seed);
    const Grid shifted = corrupt_label(s, -10.0, 0.0, 5);
    double delta = 0;
    int n = 0;
    for (std::size_t i = 0; i < s.coarse_label.size(); ++i) {
      if (region_at(s.region_chart, i) != RegionClass::MIZ || s.coarse_label[i] < 10.0) continue;
      delta += shifted[i] - s.coarse_label[i];
      ++n;
    }
    if (n) CHECK(delta / n == doctest::Approx(-10.0).epsilon(1e-12));
  }
}

TEST_CASE("scene params validation") {
  SceneParams p;
  p.label_factor = 0;
  CHECK_THROWS_AS(gen_scene(p, 1), ContractError);
  p = SceneParams{};
  p.size = 16;
  p.label_factor = 8;
  CHECK_THROWS_AS(gen_scene(p, 1), ContractError);
  p = SceneParams{};
  p.floe_density = -1;
  CHECK_THROWS_AS(gen_scene(p, 1), ContractError);
  CHECK_THROWS_AS(sensor_params(SceneParams{}, "landsat"), ContractError);
  CHECK(sensor_params(SceneParams{}, "rcm").thermal_band_amplitude > 0);
}

TEST_CASE("scene directory roundtrip") {
  const auto dir = std::filesystem::temp_directory_path() / "icefuse_scene_roundtrip";
  std::filesystem::remove_all(dir);
  SceneParams p;
  p.miz_label_bias = 4.5;
  const Scene s = gen_scene(p, 21);
  write_scene(s, dir);
  CHECK(scenes_identical(read_scene(dir), s));
  std::filesystem::remove(dir / "manifest.json");
  CHECK_THROWS_AS(read_scene(dir), FormatError);
  std::filesystem::remove_all(dir);
}
