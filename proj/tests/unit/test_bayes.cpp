#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <cstdlib>
#include <vector>

#include "icefuse/bayes/estimators.hpp"
#include "icefuse/bayes/variational.hpp"
#include "icefuse/common/error.hpp"
#include "icefuse/model/input.hpp"
#include "icefuse/numkernel/gradcheck.hpp"
#include "icefuse/numkernel/ops.hpp"
#include "support/random.hpp"

using namespace icefuse;
using namespace icefuse::bayes;
using icefuse::testing::random_normal;
using icefuse::testing::random_tensor;

namespace {

model::ModelConfig tiny() {
  model::ModelConfig c;
  c.chip = 16;
  c.window = 2;
  c.hidden = 8;
  c.heads = 2;
  return c;
}

grid::Grid constant(double v) { return grid::Grid(2, 2, v); }

VariationalTensor single(double mu, double sigma) {
  return {nk::Tensor::from({1}, {mu}), nk::Tensor::from({1}, {rho_for_sigma(sigma)})};
}

struct ThreadsEnv {
  explicit ThreadsEnv(const char* v) { setenv("ICEFUSE_THREADS", v, 1); }
  ~ThreadsEnv() { unsetenv("ICEFUSE_THREADS"); }
};

}  // namespace

TEST_CASE("KL closed-form examples") {
  CHECK(std::abs(kl_diag_gaussian(single(0.0, 1.0))) < 1e-15);
  CHECK(kl_diag_gaussian(single(1.0, 1.0)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(kl_diag_gaussian(single(0.0, 2.0)) == doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-12));
  CHECK(kl_diag_gaussian(single(0.0, 2.0)) == doctest::Approx(0.80685).epsilon(1e-5));
}

TEST_CASE("KL is non-negative and graph form agrees") {
  Stream s(3);
  for (int trial = 0; trial < 200; ++trial) {
    VariationalTensor v{random_normal({5}, 10 + trial), random_tensor({5}, 500 + trial, -4.0, 2.0)};
    const double kl = kl_diag_gaussian(v);
    CHECK(kl >= 0.0);
    nk::Graph g;
    const double graph_kl = kl_diag_gaussian(g.leaf(v.mu), g.leaf(v.rho)).value().item();
    CHECK(std::abs(graph_kl - kl) <= 1e-10 * std::max(1.0, kl));
  }
}

TEST_CASE("KL plus reparameterized sample passes the gradient check") {
  const auto eps = random_normal({3, 4}, 8);
  const auto target = random_normal({4}, 9);
  const auto report = nk::grad_check(
      [&](nk::Graph& g, std::span<const nk::Var> p) {
        const auto w = reparameterize(p[0], p[1], eps);
        const auto y = nk::matmul(g.constant(nk::Tensor::from({1, 3}, {0.3, -1.2, 0.8})), w);
        const auto fit = nk::sum(nk::mul(y, y));
        return nk::add(fit, kl_diag_gaussian(p[0], p[1]));
      },
      {random_normal({3, 4}, 1), random_tensor({3, 4}, 2, -2.0, 1.0)});
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("sampling: collapse, determinism and Monte-Carlo mean") {
  VariationalTensor collapsed{random_normal({4, 4}, 1), nk::Tensor({4, 4}, -20.0)};
  const auto w = sample_weights(collapsed, 7, "w");
  for (std::size_t i = 0; i < w.numel(); ++i) CHECK(std::abs(w[i] - collapsed.mu[i]) < 1e-8);

  VariationalTensor v{nk::Tensor::from({1}, {0.7}), nk::Tensor::from({1}, {rho_for_sigma(0.5)})};
  CHECK(sample_weights(v, 11, "w").bitwise_equal(sample_weights(v, 11, "w")));
  CHECK_FALSE(sample_weights(v, 11, "w").bitwise_equal(sample_weights(v, 11, "other")));

  const std::size_t n = 100000;
  VariationalTensor wide{nk::Tensor({n}, 0.7), nk::Tensor({n}, rho_for_sigma(0.5))};
  const auto draws = sample_weights(wide, 12, "w");
  double mean = 0;
  for (double d : draws.data()) mean += d;
  mean /= static_cast<double>(n);
  CHECK(std::abs(mean - 0.7) < 4.0 * 0.5 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("predictive_stats oracles") {
  const auto r = predictive_stats({constant(1), constant(2), constant(3)}, Estimator::BBB);
  CHECK(r.n_samples == 3);
  CHECK(r.estimator == Estimator::BBB);
  CHECK(r.mean[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));

  const auto same = predictive_stats(std::vector<grid::Grid>(7, constant(37.3)), Estimator::MCDropout);
  CHECK(same.mean[1] == 37.3);
  CHECK(same.std[1] == 0.0);

  const auto one = predictive_stats({constant(12.5)}, Estimator::Deterministic);
  CHECK(one.mean[0] == 12.5);
  CHECK(one.std[0] == 0.0);

  const auto ens = predictive_stats({constant(40), constant(60)}, Estimator::EpochEnsemble);
  CHECK(ens.mean[0] == 50.0);
  CHECK(ens.std[0] == 10.0);

  auto holed = constant(5);
  holed.set_nodata(3);
  const auto masked = predictive_stats({holed, holed}, Estimator::BBB);
  CHECK_FALSE(masked.mean.valid(3));
  CHECK_FALSE(masked.std.valid(3));
  CHECK_THROWS_AS(predictive_stats({holed, constant(5)}, Estimator::BBB), ContractError);
  CHECK_THROWS_AS(predictive_stats({}, Estimator::BBB), ContractError);
}

TEST_CASE("bbb inference collapse cases and thread independence") {
  const auto cfg = tiny();
  auto params = model::init_variational(cfg, 3);
  const auto x = random_tensor({2, 3, 16, 16}, 4, 0.0, 1.0);

  const auto single_draw = bbb_infer(params, x, cfg, 1, 5);
  REQUIRE(single_draw.size() == 2);
  for (double s : single_draw[0].std.values()) CHECK(s == 0.0);

  for (auto& [name, t] : params)
    if (name.ends_with(".rho")) t.fill(-20.0);
  for (const auto& r : bbb_infer(params, x, cfg, 5, 5))
    for (double s : r.std.values()) CHECK(s < 1e-6);

  params = model::init_variational(cfg, 3);
  for (auto& [name, t] : params)
    if (name.ends_with(".rho")) t.fill(-1.0);
  const auto sequential = bbb_infer(params, x, cfg, 6, 9);
  std::vector<UncertaintyResult> threaded;
  {
    ThreadsEnv env("4");
    threaded = bbb_infer(params, x, cfg, 6, 9);
  }
  for (std::size_t b = 0; b < 2; ++b) {
    CHECK(threaded[b].mean.bitwise_equal(sequential[b].mean));
    CHECK(threaded[b].std.bitwise_equal(sequential[b].std));
  }
  double max_std = 0;
  for (double s : sequential[0].std.values()) max_std = std::max(max_std, s);
  CHECK(max_std > 0.0);
}

TEST_CASE("dropout masks") {
  CHECK_THROWS_AS(dropout_masks({0.0}, 1), ContractError);
  CHECK_THROWS_AS(dropout_masks({-0.5}, 1), ContractError);
  CHECK_THROWS_AS(dropout_masks({1.5}, 1), ContractError);

  const auto masks = dropout_masks({0.9}, 17);
  const auto m = *masks("stage0.glo", {100000});
  double kept = 0, total = 0;
  for (double v : m.data()) {
    kept += v > 0 ? 1 : 0;
    total += v;
  }
  CHECK(std::abs(kept / 1e5 - 0.9) < 0.005);
  CHECK(std::abs(total / 1e5 - 1.0) < 0.01);
  CHECK(masks("stage0.glo", {64})->bitwise_equal(*masks("stage0.glo", {64})));
  CHECK_FALSE(masks("stage0.glo", {64})->bitwise_equal(*masks("stage0.lo", {64})));
}

TEST_CASE("mc dropout with keep 1 equals the deterministic forward") {
  const auto cfg = tiny();
  const auto params = model::init_deterministic(cfg, 2);
  const auto x = random_tensor({1, 3, 16, 16}, 4, 0.0, 1.0);
  const auto r = mc_dropout_infer(params, x, cfg, {1.0}, 4, 3);
  const auto det = model::to_grids(model::predict(params, x, cfg));
  CHECK(r[0].mean.bitwise_equal(det[0]));
  for (double s : r[0].std.values()) CHECK(s == 0.0);

  const auto noisy = mc_dropout_infer(params, x, cfg, {0.5}, 4, 3);
  double max_std = 0;
  for (double s : noisy[0].std.values()) max_std = std::max(max_std, s);
  CHECK(max_std > 0.0);
  CHECK_THROWS_AS(mc_dropout_infer(params, x, cfg, {0.0}, 4, 3), ContractError);
}

TEST_CASE("epoch ensemble") {
  const auto cfg = tiny();
  const auto x = random_tensor({1, 3, 16, 16}, 4, 0.0, 1.0);
  const auto a = model::init_deterministic(cfg, 1);
  const auto b = model::init_deterministic(cfg, 2);

  const auto one = epoch_ensemble_infer({a}, x, cfg);
  for (double s : one[0].std.values()) CHECK(s == 0.0);

  const auto two = epoch_ensemble_infer({a, b}, x, cfg);
  const auto direct = predictive_stats(
      {model::to_grids(model::predict(a, x, cfg))[0], model::to_grids(model::predict(b, x, cfg))[0]},
      Estimator::EpochEnsemble);
  CHECK(two[0].mean.bitwise_equal(direct.mean));
  CHECK(two[0].std.bitwise_equal(direct.std));

  auto other = cfg;
  other.hidden = 4;
  CHECK_THROWS_AS(epoch_ensemble_infer({a, model::init_deterministic(other, 1)}, x, cfg), ConfigError);
  CHECK_THROWS_AS(epoch_ensemble_infer({}, x, cfg), ContractError);
}

TEST_CASE("estimator names and scene inference") {
  CHECK(parse_estimator("mc_dropout") == Estimator::MCDropout);
  CHECK(estimator_name(Estimator::EpochEnsemble) == "epoch_ensemble");
  CHECK_THROWS_AS(parse_estimator("bayes"), ConfigError);

  const auto cfg = tiny();
  PredictiveModel m{Estimator::BBB, cfg, {model::init_variational(cfg, 1)}, 3, 4, {}};
  std::vector<grid::Grid> channels;
  for (std::uint64_t c = 0; c < 3; ++c) {
    grid::Grid g(20, 24);
    Stream s(c);
    for (std::size_t i = 0; i < g.size(); ++i) g.set(i, s.uniform());
    channels.push_back(std::move(g));
  }
  channels[1].set_nodata(5);
  std::vector<const grid::Grid*> ptrs{&channels[0], &channels[1], &channels[2]};
  const auto r = infer_scene(m, ptrs, 0.2);
  CHECK(r.mean.height() == 20);
  CHECK(r.mean.width() == 24);
  CHECK_FALSE(r.mean.valid(5));
  CHECK_FALSE(r.std.valid(5));
  CHECK(r.mean.valid_count() == 20 * 24 - 1);
  for (std::size_t i = 0; i < r.mean.size(); ++i)
    if (r.mean.valid(i)) {
      CHECK(r.mean[i] >= 0.0);
      CHECK(r.mean[i] <= 100.0);
      CHECK(r.std[i] >= 0.0);
    }

  // Batched multi-scene inference reproduces the per-scene result.
  std::vector<grid::Grid> other;
  for (const auto& c : channels) other.push_back(c.crop(0, 0, 16, 16));
  const SceneChannels second{&other[0], &other[1], &other[2]};
  for (std::size_t batch : {1, 3, 16}) {
    const auto both = infer_scenes(m, {ptrs, second}, 0.2, batch);
    REQUIRE(both.size() == 2);
    CHECK(both[0].mean.bitwise_equal(r.mean));
    CHECK(both[0].std.bitwise_equal(r.std));
    CHECK(both[1].mean.bitwise_equal(infer_scene(m, second, 0.2).mean));
  }

  ptrs.pop_back();
  CHECK_THROWS_AS(infer_scene(m, ptrs, 0.2), DimensionError);
}

TEST_CASE("sample_noise is standard normal and keyed by seed and name") {
  const std::size_t n = 1000000;
  const auto eps = sample_noise({n}, 3, "w");
  double mean = 0.0, m2 = 0.0;
  std::size_t tail = 0;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    mean += eps[i];
    m2 += eps[i] * eps[i];
    tail += std::abs(eps[i]) > 3.0;
    v[i] = eps[i];
  }
  mean /= n;
  CHECK(std::abs(mean) < 0.005);
  CHECK(std::abs(m2 / n - 1.0) < 0.005);
  CHECK(std::abs(tail / double(n) - 0.0026998) < 0.0003);
  std::sort(v.begin(), v.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = 0.5 * std::erfc(-v[i] / std::sqrt(2.0));
    ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
  }
  CHECK(ks < 0.002);

  const auto again = sample_noise({n}, 3, "w");
  const auto other = sample_noise({n}, 3, "v");
  CHECK(std::ranges::equal(eps.data(), again.data()));
  CHECK(eps[0] != other[0]);
}
