#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "icefuse/gridstore/grid.hpp"
#include "icefuse/synthgen/scene.hpp"

namespace icefuse::eval {

/// Standard normal CDF through erfc.
double normal_cdf(double z) noexcept;

/// What a bin's observed confidence is compared against.
enum class ExpectedConfidence {
  /// Midpoint of the bin. Each bin then contributes at most half a bin width,
  /// so ECE <= 1 / (2 bins).
  BinMidpoint,
  /// Fraction of all cells whose confidence is <= the cell's own, averaged
  /// over the bin; equals the confidence itself for calibrated residuals.
  EmpiricalFrequency,
};

struct EceConfig {
  std::size_t bins = 10;
  double sigma_floor = 1e-8;
  ExpectedConfidence expected = ExpectedConfidence::BinMidpoint;
  void validate() const;
};

struct EceBin {
  double lower = 0;
  double upper = 0;
  std::size_t count = 0;
  double mean_confidence = 0;  // NaN for an empty bin
  double expected = 0;         // NaN for an empty bin
};

struct EceResult {
  double ece = 0;
  std::size_t cells = 0;
  std::vector<EceBin> bins;
};

/// z = |y - yhat| / max(sigma, floor), p = 2 Phi(z) - 1, binned into equal
/// widths on [0, 1]; ECE = sum (n_m / N) |mean p in bin - expected in bin|.
/// ContractError when no cell is valid in all three grids.
EceResult ece_table(const grid::Grid& y, const grid::Grid& yhat, const grid::Grid& sigma, const EceConfig& cfg = {});
double ece(const grid::Grid& y, const grid::Grid& yhat, const grid::Grid& sigma, const EceConfig& cfg = {});

std::string_view expected_confidence_name(ExpectedConfidence e) noexcept;
/// "midpoint" or "empirical"; ConfigError otherwise.
ExpectedConfidence parse_expected_confidence(std::string_view name);

/// Ice threshold (percent) for a region: 80 in the pack, 15 elsewhere.
double ice_threshold(synth::RegionClass r);

/// 1 where truth >= the region's threshold, 0 otherwise, nodata where either is.
grid::Grid truth_ice_mask(const grid::Grid& truth, const grid::Grid& region);

struct DetectionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  DetectionCounts& operator+=(const DetectionCounts& o) noexcept;
};

struct FeatureMetrics {
  double ice = 0;      // TP / (TP + FN), NaN without ice cells
  double water = 0;    // TN / (TN + FP), NaN without water cells
  double overall = 0;  // mean of the defined ones
  DetectionCounts counts;
};

DetectionCounts detection_counts(const grid::Grid& pred_sic, const grid::Grid& truth_mask, const grid::Grid& region);
FeatureMetrics feature_metrics(const DetectionCounts& counts);
FeatureMetrics feature_metrics(const grid::Grid& pred_sic, const grid::Grid& truth_mask, const grid::Grid& region);

struct RegressionMetrics {
  double r2 = 0;  // NaN when y has zero variance
  double mae = 0;
  double me = 0;  // mean(y - yhat); positive means underestimation
  std::size_t cells = 0;
};

RegressionMetrics regression_metrics(const grid::Grid& y, const grid::Grid& yhat);
/// Same over the concatenation of several grid pairs.
RegressionMetrics regression_metrics(const std::vector<grid::Grid>& y, const std::vector<grid::Grid>& yhat);

struct MetricsReport {
  EceResult ece;
  FeatureMetrics features;
  RegressionMetrics regression;
  std::vector<double> mean_std_by_region;  // open water, MIZ, ice pack; NaN if absent
};

std::string to_json(const MetricsReport& r);
void write_report(const MetricsReport& r, const std::filesystem::path& path);
/// bin_lower,bin_upper,count,mean_confidence,expected
void write_ece_csv(const EceResult& r, const std::filesystem::path& path);

}  // namespace icefuse::eval
