#include "icefuse/supervision/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

#include "icefuse/common/error.hpp"
#include "icefuse/numkernel/ops.hpp"

namespace icefuse::supervision {

using synth::RegionClass;

std::size_t ClusterSet::total() const noexcept {
  return std::accumulate(members.begin(), members.end(), std::size_t{0},
                         [](std::size_t s, const auto& m) { return s + m.size(); });
}

std::size_t cluster_of(double value) {
  if (!(value >= 0.0 && value <= 100.0)) throw ContractError("label value " + std::to_string(value) + " outside [0, 100]");
  const auto k = static_cast<std::size_t>(std::floor(value / 10.0));
  return k >= kClusterCount ? kClusterCount - 1 : k;
}

ClusterSet cluster_assign(const grid::Grid& label) {
  ClusterSet cs;
  for (std::size_t i = 0; i < label.size(); ++i)
    if (label.valid(i)) cs.members[cluster_of(label[i])].push_back(i);
  return cs;
}

namespace {

const std::vector<std::size_t>& members_of(const ClusterSet& cs, std::size_t k) {
  if (k >= kClusterCount) throw ContractError("cluster index " + std::to_string(k) + " out of range");
  if (cs.members[k].empty()) throw ContractError("cluster " + std::to_string(k) + " is empty");
  return cs.members[k];
}

double label_mean(const grid::Grid& label, const std::vector<std::size_t>& cells) {
  double s = 0;
  for (auto i : cells) s += label[i];
  return s / static_cast<double>(cells.size());
}

void check_extents(std::size_t pred_cells, const grid::Grid& label, const grid::Grid& region) {
  if (pred_cells != label.size() || !label.same_extent(region))
    throw DimensionError("loss: prediction, label and region extents differ");
}

}  // namespace

double cluster_mean(const grid::Grid& pred, const ClusterSet& cs, std::size_t k) {
  const auto& cells = members_of(cs, k);
  double s = 0;
  for (auto i : cells) s += pred[i];
  return s / static_cast<double>(cells.size());
}

nk::Var cluster_mean(nk::Var pred, const ClusterSet& cs, std::size_t k) {
  const auto& cells = members_of(cs, k);
  for (auto i : cells)
    if (i >= pred.value().numel()) throw DimensionError("cluster cell outside prediction");
  return nk::mean(nk::gather(pred, cells, {cells.size()}));
}

void GeoWeights::validate() const {
  for (double w : {open_water, ice_pack, miz})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("geo weights must be finite and non-negative");
  if (open_water == 0.0 && ice_pack == 0.0 && miz == 0.0) throw ConfigError("at least one geo weight must be positive");
}

double GeoWeights::of(RegionClass r) const {
  switch (r) {
    case RegionClass::OpenWater: return open_water;
    case RegionClass::MIZ: return miz;
    case RegionClass::IcePack: return ice_pack;
    case RegionClass::NoData: break;
  }
  throw ContractError("no geo weight for nodata region");
}

RegionClass majority_region(const grid::Grid& region, const GeoWeights& gw) {
  std::array<std::size_t, 3> counts{};
  for (std::size_t i = 0; i < region.size(); ++i) {
    const auto r = synth::region_at(region, i);
    if (r != RegionClass::NoData) ++counts[static_cast<std::size_t>(r)];
  }
  const auto best = std::max({counts[0], counts[1], counts[2]});
  if (best == 0) throw ContractError("region chart has no valid cells");
  if (counts[1] == best) return RegionClass::MIZ;
  if (counts[0] == best && counts[2] == best)
    return gw.ice_pack < gw.open_water ? RegionClass::IcePack : RegionClass::OpenWater;
  return counts[0] == best ? RegionClass::OpenWater : RegionClass::IcePack;
}

double sample_weight(const grid::Grid& region, const GeoWeights& gw) { return gw.of(majority_region(region, gw)); }

double l1_gw_loss(const grid::Grid& pred, const grid::Grid& label, const grid::Grid& region, const GeoWeights& gw) {
  check_extents(pred.size(), label, region);
  const double w = sample_weight(region, gw);
  const auto cs = cluster_assign(label);
  double loss = 0;
  for (std::size_t k = 0; k < kClusterCount; ++k) {
    if (cs.members[k].empty()) continue;
    loss += w * std::abs(cluster_mean(pred, cs, k) - label_mean(label, cs.members[k]));
  }
  return loss;
}

nk::Var l1_gw_loss(nk::Var pred, const grid::Grid& label, const grid::Grid& region, const GeoWeights& gw) {
  check_extents(pred.value().numel(), label, region);
  const double w = sample_weight(region, gw);
  const auto cs = cluster_assign(label);
  std::optional<nk::Var> loss;
  for (std::size_t k = 0; k < kClusterCount; ++k) {
    if (cs.members[k].empty()) continue;
    const auto term = nk::abs(nk::add_scalar(cluster_mean(pred, cs, k), -label_mean(label, cs.members[k])));
    loss = loss ? nk::add(*loss, term) : term;
  }
  if (!loss) return pred.graph->constant(nk::Tensor::scalar(0.0));
  return nk::scale(*loss, w);
}

double total_loss(double l1gw, double kl, double kl_scale) noexcept { return l1gw + kl_scale * kl; }

nk::Var total_loss(nk::Var l1gw, nk::Var kl, double kl_scale) { return nk::add(l1gw, nk::scale(kl, kl_scale)); }

}  // namespace icefuse::supervision
