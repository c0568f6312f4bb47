#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "icefuse/gridstore/grid.hpp"
#include "icefuse/numkernel/graph.hpp"
#include "icefuse/synthgen/scene.hpp"

namespace icefuse::supervision {

inline constexpr std::size_t kClusterCount = 10;

/// Label cells binned by value into [k*10, (k+1)*10); 100 falls in bin 9.
struct ClusterSet {
  std::array<std::vector<std::size_t>, kClusterCount> members;

  std::size_t count(std::size_t k) const { return members.at(k).size(); }
  std::size_t total() const noexcept;
};

/// Bin index of one SIC value; ContractError outside [0, 100].
std::size_t cluster_of(double value);
/// Nodata cells are left out.
ClusterSet cluster_assign(const grid::Grid& label);

/// Mean of pred over cluster k (ContractError when empty). pred is any
/// tensor with one element per label cell.
double cluster_mean(const grid::Grid& pred, const ClusterSet& cs, std::size_t k);
nk::Var cluster_mean(nk::Var pred, const ClusterSet& cs, std::size_t k);

struct GeoWeights {
  double open_water = 1.0;
  double ice_pack = 1.0;
  double miz = 0.5;

  void validate() const;
  double of(synth::RegionClass r) const;
  friend bool operator==(const GeoWeights&, const GeoWeights&) = default;
};

/// Majority region of the chip's valid cells; ties go to MIZ, then to the
/// lower weight. ContractError when every cell is nodata.
synth::RegionClass majority_region(const grid::Grid& region, const GeoWeights& gw);
double sample_weight(const grid::Grid& region, const GeoWeights& gw);

/// sum over non-empty clusters of GW * |mean(pred in k) - mean(label in k)|.
double l1_gw_loss(const grid::Grid& pred, const grid::Grid& label, const grid::Grid& region, const GeoWeights& gw);
nk::Var l1_gw_loss(nk::Var pred, const grid::Grid& label, const grid::Grid& region, const GeoWeights& gw);

double total_loss(double l1gw, double kl, double kl_scale) noexcept;
nk::Var total_loss(nk::Var l1gw, nk::Var kl, double kl_scale);

}  // namespace icefuse::supervision
