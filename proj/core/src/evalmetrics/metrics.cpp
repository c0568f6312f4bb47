#include "icefuse/evalmetrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>

#include "icefuse/common/error.hpp"

namespace icefuse::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void same_extent(const grid::Grid& a, const grid::Grid& b, const char* what) {
  if (!a.same_extent(b)) throw DimensionError(std::string(what) + ": grid extents differ");
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

void EceConfig::validate() const {
  if (bins == 0) throw ContractError("ECE needs at least one bin");
  if (!(sigma_floor > 0.0)) throw ContractError("ECE sigma floor must be positive");
}

std::string_view expected_confidence_name(ExpectedConfidence e) noexcept {
  return e == ExpectedConfidence::BinMidpoint ? "midpoint" : "empirical";
}

ExpectedConfidence parse_expected_confidence(std::string_view name) {
  if (name == "midpoint") return ExpectedConfidence::BinMidpoint;
  if (name == "empirical") return ExpectedConfidence::EmpiricalFrequency;
  throw ConfigError("unknown ECE expected-confidence convention '" + std::string(name) +
                    "' (expected midpoint or empirical)");
}

EceResult ece_table(const grid::Grid& y, const grid::Grid& yhat, const grid::Grid& sigma, const EceConfig& cfg) {
  cfg.validate();
  same_extent(y, yhat, "ece");
  same_extent(y, sigma, "ece");
  std::vector<double> conf;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!y.valid(i) || !yhat.valid(i) || !sigma.valid(i)) continue;
    const double z = std::abs(y[i] - yhat[i]) / std::max(sigma[i], cfg.sigma_floor);
    conf.push_back(1.0 - std::erfc(z / std::sqrt(2.0)));
  }
  if (conf.empty()) throw ContractError("ece: no jointly valid cells");

  std::vector<double> expected(conf.size());
  if (cfg.expected == ExpectedConfidence::EmpiricalFrequency) {
    auto sorted = conf;
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(conf.size());
    for (std::size_t i = 0; i < conf.size(); ++i)
      expected[i] = static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), conf[i]) - sorted.begin()) / n;
  }

  const std::size_t m = cfg.bins;
  std::vector<double> sum_p(m, 0.0), sum_e(m, 0.0);
  EceResult r;
  r.cells = conf.size();
  r.bins.resize(m);
  for (std::size_t i = 0; i < conf.size(); ++i) {
    const auto k = std::min(m - 1, static_cast<std::size_t>(conf[i] * static_cast<double>(m)));
    sum_p[k] += conf[i];
    sum_e[k] += expected[i];
    ++r.bins[k].count;
  }
  for (std::size_t k = 0; k < m; ++k) {
    auto& b = r.bins[k];
    b.lower = static_cast<double>(k) / static_cast<double>(m);
    b.upper = static_cast<double>(k + 1) / static_cast<double>(m);
    if (b.count == 0) {
      b.mean_confidence = b.expected = kNaN;
      continue;
    }
    const double count = static_cast<double>(b.count);
    b.mean_confidence = sum_p[k] / count;
    b.expected = cfg.expected == ExpectedConfidence::BinMidpoint ? 0.5 * (b.lower + b.upper) : sum_e[k] / count;
    r.ece += count / static_cast<double>(r.cells) * std::abs(b.mean_confidence - b.expected);
  }
  return r;
}

double ece(const grid::Grid& y, const grid::Grid& yhat, const grid::Grid& sigma, const EceConfig& cfg) {
  return ece_table(y, yhat, sigma, cfg).ece;
}

double ice_threshold(synth::RegionClass r) {
  switch (r) {
    case synth::RegionClass::IcePack: return 80.0;
    case synth::RegionClass::MIZ:
    case synth::RegionClass::OpenWater: return 15.0;
    case synth::RegionClass::NoData: break;
  }
  throw ContractError("no ice threshold for nodata region");
}

grid::Grid truth_ice_mask(const grid::Grid& truth, const grid::Grid& region) {
  same_extent(truth, region, "truth_ice_mask");
  auto mask = grid::Grid::filled_nodata(truth.height(), truth.width());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto r = synth::region_at(region, i);
    if (!truth.valid(i) || r == synth::RegionClass::NoData) continue;
    mask.set(i, truth[i] >= ice_threshold(r) ? 1.0 : 0.0);
  }
  return mask;
}

DetectionCounts& DetectionCounts::operator+=(const DetectionCounts& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

DetectionCounts detection_counts(const grid::Grid& pred_sic, const grid::Grid& truth_mask, const grid::Grid& region) {
  same_extent(pred_sic, truth_mask, "feature_metrics");
  same_extent(pred_sic, region, "feature_metrics");
  DetectionCounts c;
  for (std::size_t i = 0; i < pred_sic.size(); ++i) {
    const auto r = synth::region_at(region, i);
    if (!pred_sic.valid(i) || !truth_mask.valid(i) || r == synth::RegionClass::NoData) continue;
    const bool truth_ice = truth_mask[i] >= 0.5;
    const bool pred_ice = pred_sic[i] >= ice_threshold(r);
    if (truth_ice)
      ++(pred_ice ? c.tp : c.fn);
    else
      ++(pred_ice ? c.fp : c.tn);
  }
  return c;
}

FeatureMetrics feature_metrics(const DetectionCounts& counts) {
  FeatureMetrics f;
  f.counts = counts;
  f.ice = ratio(counts.tp, counts.tp + counts.fn);
  f.water = ratio(counts.tn, counts.tn + counts.fp);
  if (std::isnan(f.ice))
    f.overall = f.water;
  else if (std::isnan(f.water))
    f.overall = f.ice;
  else
    f.overall = 0.5 * (f.ice + f.water);
  return f;
}

FeatureMetrics feature_metrics(const grid::Grid& pred_sic, const grid::Grid& truth_mask, const grid::Grid& region) {
  return feature_metrics(detection_counts(pred_sic, truth_mask, region));
}

RegressionMetrics regression_metrics(const std::vector<grid::Grid>& y, const std::vector<grid::Grid>& yhat) {
  if (y.size() != yhat.size()) throw DimensionError("regression_metrics: grid counts differ");
  RegressionMetrics m;
  double sum_y = 0, abs_err = 0, err = 0;
  for (std::size_t g = 0; g < y.size(); ++g) {
    same_extent(y[g], yhat[g], "regression_metrics");
    for (std::size_t i = 0; i < y[g].size(); ++i) {
      if (!y[g].valid(i) || !yhat[g].valid(i)) continue;
      const double d = y[g][i] - yhat[g][i];
      sum_y += y[g][i];
      abs_err += std::abs(d);
      err += d;
      ++m.cells;
    }
  }
  if (m.cells == 0) throw ContractError("regression_metrics: no jointly valid cells");
  const double n = static_cast<double>(m.cells);
  const double y_mean = sum_y / n;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t g = 0; g < y.size(); ++g)
    for (std::size_t i = 0; i < y[g].size(); ++i) {
      if (!y[g].valid(i) || !yhat[g].valid(i)) continue;
      ss_res += (y[g][i] - yhat[g][i]) * (y[g][i] - yhat[g][i]);
      ss_tot += (y[g][i] - y_mean) * (y[g][i] - y_mean);
    }
  m.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : kNaN;
  m.mae = abs_err / n;
  m.me = err / n;
  return m;
}

RegressionMetrics regression_metrics(const grid::Grid& y, const grid::Grid& yhat) {
  return regression_metrics(std::vector<grid::Grid>{y}, std::vector<grid::Grid>{yhat});
}

std::string to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["ece"] = number(r.ece.ece);
  j["ece_cells"] = r.ece.cells;
  j["ice_acc"] = number(r.features.ice);
  j["water_acc"] = number(r.features.water);
  j["overall_acc"] = number(r.features.overall);
  j["counts"] = {{"tp", r.features.counts.tp},
                 {"fp", r.features.counts.fp},
                 {"tn", r.features.counts.tn},
                 {"fn", r.features.counts.fn}};
  j["r2"] = number(r.regression.r2);
  j["mae"] = number(r.regression.mae);
  j["me"] = number(r.regression.me);
  j["regression_cells"] = r.regression.cells;
  if (r.mean_std_by_region.size() == 3)
    j["mean_std"] = {{"open_water", number(r.mean_std_by_region[0])},
                     {"miz", number(r.mean_std_by_region[1])},
                     {"ice_pack", number(r.mean_std_by_region[2])}};
  return j.dump(2) + "\n";
}

void write_report(const MetricsReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write metrics report: " + path.string());
  out << to_json(r);
}

void write_ece_csv(const EceResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write ECE table: " + path.string());
  out.precision(17);
  out << "bin_lower,bin_upper,count,mean_confidence,expected\n";
  for (const auto& b : r.bins) {
    out << b.lower << ',' << b.upper << ',' << b.count << ',';
    if (b.count) out << b.mean_confidence << ',' << b.expected;
    else out << ',';
    out << '\n';
  }
}

}  // namespace icefuse::eval
