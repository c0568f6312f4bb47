#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "icefuse/common/error.hpp"
#include "icefuse/model/transformer.hpp"
#include "icefuse/numkernel/gradcheck.hpp"
#include "icefuse/numkernel/ops.hpp"
#include "support/random.hpp"

using namespace icefuse;
using namespace icefuse::model;
using icefuse::testing::random_normal;
using icefuse::testing::random_tensor;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.chip = 16;
  c.patch = 4;
  c.window = 2;
  c.hidden = 8;
  c.heads = 2;
  return c;
}

nk::Tensor identity(std::size_t n) {
  nk::Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

// Plain-loop single-head attention over x[S, E] with identity projections.
std::vector<double> naive_attention(const std::vector<double>& x, std::size_t s, std::size_t e) {
  std::vector<double> out(s * e, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    std::vector<double> w(s);
    double mx = -1e300;
    for (std::size_t j = 0; j < s; ++j) {
      double d = 0;
      for (std::size_t k = 0; k < e; ++k) d += x[i * e + k] * x[j * e + k];
      w[j] = d / std::sqrt(static_cast<double>(e));
      mx = std::max(mx, w[j]);
    }
    double z = 0;
    for (auto& v : w) z += (v = std::exp(v - mx));
    for (std::size_t j = 0; j < s; ++j)
      for (std::size_t k = 0; k < e; ++k) out[i * e + k] += w[j] / z * x[j * e + k];
  }
  return out;
}

}  // namespace

TEST_CASE("config arithmetic and validation") {
  ModelConfig c;
  CHECK(c.tokens() == 16);
  CHECK(c.patches_per_token() == 16);
  CHECK(c.token_dim() == 512);
  CHECK(c.patch_features() == 48);
  CHECK_NOTHROW(c.validate());

  ModelConfig bad = c;
  bad.chip = 60;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.dropout_keep = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("patch merge shape and constant input") {
  const ModelConfig cfg;
  nk::Graph g;
  auto x = g.leaf(nk::Tensor({2, 3, 64, 64}, 0.7));
  auto w = g.leaf(random_tensor({48, 32}, 1));
  auto b = g.leaf(random_tensor({32}, 2));
  const auto tokens = patch_merge(x, w, b, cfg).value();
  REQUIRE(tokens.shape() == nk::Shape{2, 16, 512});
  // Every patch sees the same pixels, so every (token, patch) feature vector matches.
  for (std::size_t i = 0; i < tokens.numel(); ++i) CHECK(tokens[i] == doctest::Approx(tokens[i % 32]).epsilon(1e-12));

  auto wrong = g.leaf(nk::Tensor({1, 3, 32, 32}));
  CHECK_THROWS_AS(patch_merge(wrong, w, b, cfg), DimensionError);
}

TEST_CASE("patch merge places pixels by token and patch") {
  ModelConfig cfg = tiny();
  cfg.channels = 1;
  nk::Graph g;
  nk::Tensor img({1, 1, 16, 16});
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>(i);
  // Embedding weight picks pixel (0, 0) of each patch into feature 0.
  nk::Tensor w({16, 8});
  w[0] = 1.0;
  const auto tokens =
      patch_merge(g.leaf(img), g.leaf(std::move(w)), g.leaf(nk::Tensor({8})), cfg).value();
  // Token (1, 0), patch (1, 1): pixel row (1*2+1)*4 = 12, col (0*2+1)*4 = 4.
  const std::size_t token = 1 * 2 + 0, patch = 1 * 2 + 1;
  CHECK(tokens[token * 32 + patch * 8] == 12 * 16 + 4);
}

TEST_CASE("attention with a single position is the value path") {
  nk::Graph g;
  const auto x = random_tensor({3, 1, 8}, 4);
  auto xv = g.leaf(x);
  auto eye = g.leaf(identity(8));
  std::optional<nk::Var> probs;
  const auto y = multi_head_attention(xv, {eye, eye, eye, eye}, 2, &probs).value();
  CHECK(y.bitwise_equal(x));
  for (double p : probs->value().data()) CHECK(p == 1.0);
}

TEST_CASE("identical tokens attend uniformly") {
  const ModelConfig cfg = tiny();
  nk::Graph g;
  nk::Tensor x({1, 4, 32});
  const auto row = random_tensor({32}, 5);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t k = 0; k < 32; ++k) x[t * 32 + k] = row[k];
  const auto params = init_deterministic(cfg, 9);
  const auto w = bind_parameters(g, params, false);
  std::optional<nk::Var> probs;
  gloformer_attention(g.leaf(x), attention_vars(w, "stage0.glo"), cfg, &probs);
  for (double p : probs->value().data()) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("gloformer matches a brute-force oracle") {
  ModelConfig cfg = tiny();
  cfg.heads = 1;
  nk::Graph g;
  const auto x = random_tensor({1, 4, 32}, 6);
  auto eye = g.leaf(identity(32));
  const auto y = gloformer_attention(g.leaf(x), {eye, eye, eye, eye}, cfg).value();
  const auto expect = naive_attention({x.data().begin(), x.data().end()}, 4, 32);
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("loformer matches a brute-force oracle per token") {
  ModelConfig cfg = tiny();
  cfg.heads = 1;
  nk::Graph g;
  const auto x = random_tensor({1, 4, 32}, 7);
  auto eye = g.leaf(identity(8));
  const auto y = loformer_attention(g.leaf(x), {eye, eye, eye, eye}, cfg).value();
  for (std::size_t t = 0; t < 4; ++t) {
    std::vector<double> tok(x.data().begin() + t * 32, x.data().begin() + (t + 1) * 32);
    const auto expect = naive_attention(tok, 4, 8);
    for (std::size_t i = 0; i < 32; ++i) CHECK(y[t * 32 + i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("loformer never mixes tokens") {
  const ModelConfig cfg = tiny();
  const auto params = init_deterministic(cfg, 3);
  auto x = random_tensor({1, 4, 32}, 8);
  auto run = [&](const nk::Tensor& in) {
    nk::Graph g;
    const auto w = bind_parameters(g, params, false);
    return loformer_attention(g.leaf(in), attention_vars(w, "stage0.lo"), cfg).value();
  };
  const auto base = run(x);
  for (std::size_t k = 32; k < 64; ++k) x[k] += 3.0;  // perturb token 1 only
  const auto moved = run(x);
  for (std::size_t t : {0u, 2u, 3u})
    for (std::size_t k = 0; k < 32; ++k) CHECK(moved[t * 32 + k] == base[t * 32 + k]);
}

TEST_CASE("gloformer is permutation equivariant over tokens") {
  const ModelConfig cfg = tiny();
  const auto params = init_deterministic(cfg, 11);
  const auto x = random_tensor({1, 4, 32}, 12);
  nk::Tensor swapped = x;
  for (std::size_t k = 0; k < 32; ++k) std::swap(swapped[k], swapped[96 + k]);
  auto run = [&](const nk::Tensor& in) {
    nk::Graph g;
    const auto w = bind_parameters(g, params, false);
    return gloformer_attention(g.leaf(in), attention_vars(w, "stage0.glo"), cfg).value();
  };
  const auto a = run(x), b = run(swapped);
  for (std::size_t k = 0; k < 32; ++k) {
    CHECK(a[k] == doctest::Approx(b[96 + k]).epsilon(1e-12));
    CHECK(a[32 + k] == doctest::Approx(b[32 + k]).epsilon(1e-12));
  }
}

TEST_CASE("attention rows are distributions") {
  nk::Graph g;
  auto x = g.leaf(random_normal({2, 5, 8}, 13, 3.0));
  auto mk = [&](std::uint64_t s) { return g.leaf(random_normal({8, 8}, s)); };
  std::optional<nk::Var> probs;
  multi_head_attention(x, {mk(1), mk(2), mk(3), mk(4)}, 2, &probs);
  const auto& p = probs->value();
  REQUIRE(p.shape() == nk::Shape{2, 2, 5, 5});
  for (std::size_t r = 0; r < p.numel() / 5; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += p[r * 5 + j];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("forward output shape, range and determinism") {
  const ModelConfig cfg;
  const auto params = init_deterministic(cfg, 21);
  const auto x = random_tensor({2, 3, 64, 64}, 22, 0.0, 1.0);
  const auto y = predict(params, x, cfg);
  REQUIRE(y.shape() == nk::Shape{2, 1, 64, 64});
  for (double v : y.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 100.0);
  }
  CHECK(predict(params, x, cfg).bitwise_equal(y));
  CHECK_THROWS_AS(predict(params, nk::Tensor({1, 3, 32, 32}), cfg), DimensionError);
}

TEST_CASE("interpolation head maps patches to their pixels") {
  ModelConfig cfg = tiny();
  cfg.stages = 1;
  nk::Graph g;
  // One nonzero input feature on token 3, patch 2; head picks feature 0 into sub-pixel (1, 2).
  nk::Tensor z({1, 4, 32});
  z[3 * 32 + 2 * 8] = 50.0;
  nk::Tensor hw({8, 16});
  hw[0 * 16 + 1 * 4 + 2] = 1.0;
  BoundWeights w{{"head.w0", g.leaf(std::move(hw))}, {"head.b", g.leaf(nk::Tensor({16}))}};
  const auto img = interpolation_head({g.leaf(z)}, w, cfg).value();
  // token 3 = (1, 1), patch 2 = (1, 0): row (1*2+1)*4+1 = 13, col (1*2+0)*4+2 = 10.
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) {
      const double v = img[r * 16 + c];
      if (r == 13 && c == 10)
        CHECK(v > 99.0);
      else
        CHECK(v == doctest::Approx(50.0).epsilon(1e-12));
    }
}

TEST_CASE("full model gradient check on a tiny config") {
  const ModelConfig cfg = tiny();
  // Larger weights keep every gradient comfortably away from zero.
  ParameterSet params;
  std::uint64_t seed = 100;
  for (const auto& spec : parameter_specs(cfg)) {
    const double sd = spec.kind == ParamKind::Attention ? 0.4 : 0.3;
    params.emplace(spec.name, spec.kind == ParamKind::NormGain ? random_tensor(spec.shape, seed++, 0.5, 1.5)
                                                               : random_normal(spec.shape, seed++, sd));
  }
  std::vector<std::string> names;
  std::vector<nk::Tensor> tensors;
  for (const auto& [n, t] : params) {
    names.push_back(n);
    tensors.push_back(t);
  }
  const auto x = random_tensor({1, 3, 16, 16}, 7, 0.0, 1.0);
  const auto weights = random_tensor({1, 1, 16, 16}, 8, 0.5, 1.5);

  const auto report = nk::grad_check(
      [&](nk::Graph& g, std::span<const nk::Var> vars) {
        BoundWeights w;
        for (std::size_t i = 0; i < vars.size(); ++i) w.emplace(names[i], vars[i]);
        const auto y = forward(g.constant(x), w, cfg);
        return nk::scale(nk::mean(nk::mul(y, g.constant(weights))), 0.01);
      },
      tensors, 1e-4, 1e-4);
  INFO("worst ", names[report.worst_param], "[", report.worst_index, "] analytic ", report.worst_analytic,
       " numeric ", report.worst_numeric);
  CHECK(report.checked == [&] {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
  }());
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("parameter sets: init, variants and completeness") {
  const ModelConfig cfg = tiny();
  const auto det = init_deterministic(cfg, 1);
  CHECK(bitwise_equal(det, init_deterministic(cfg, 1)));
  CHECK_FALSE(bitwise_equal(det, init_deterministic(cfg, 2)));
  CHECK(detect_variant(det) == Variant::Deterministic);
  CHECK_NOTHROW(check_complete(det, cfg, Variant::Deterministic));
  CHECK(det.at("stage0.glo.norm.g")[0] == 1.0);
  CHECK(det.at("embed.b")[0] == 0.0);

  const auto var = init_variational(cfg, 1);
  CHECK(detect_variant(var) == Variant::Variational);
  CHECK_NOTHROW(check_complete(var, cfg, Variant::Variational));
  CHECK(var.at("stage1.lo.wq.rho")[0] == kInitRho);
  CHECK(var.count("stage1.lo.wq") == 0);
  CHECK(var.count("stage1.mlp1.w1") == 1);
  // Same seed, same name: mu matches the deterministic init.
  CHECK(var.at("stage0.glo.wk.mu").bitwise_equal(det.at("stage0.glo.wk")));
  CHECK(bitwise_equal(mean_weights(var), det));

  auto missing = det;
  missing.erase("head.b");
  CHECK_THROWS_AS(check_complete(missing, cfg, Variant::Deterministic), ConfigError);
  auto misshaped = det;
  misshaped.at("embed.w") = nk::Tensor({3, 3});
  CHECK_THROWS_AS(check_complete(misshaped, cfg, Variant::Deterministic), ConfigError);
  ModelConfig other = cfg;
  other.hidden = 16;
  CHECK_THROWS_AS(check_complete(det, other, Variant::Deterministic), ConfigError);
}

TEST_CASE("SICW roundtrip is bitwise") {
  const auto params = init_variational(tiny(), 5);
  std::stringstream ss;
  write_checkpoint(params, ss);
  CHECK(bitwise_equal(read_checkpoint(ss), params));
}

TEST_CASE("SICW rejects malformed input") {
  const auto params = init_deterministic(tiny(), 5);
  std::stringstream ss;
  write_checkpoint(params, ss);
  const std::string bytes = ss.str();
  auto read = [](std::string b) {
    std::istringstream in(b);
    return read_checkpoint(in);
  };
  CHECK_THROWS_AS(read("SICG" + bytes.substr(4)), FormatError);
  CHECK_THROWS_AS(read(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(read(bytes + "x"), FormatError);
  std::string v2 = bytes;
  v2[4] = 2;
  CHECK_THROWS_AS(read(v2), FormatError);
  CHECK_THROWS_AS(read_checkpoint(std::filesystem::path("/nonexistent/w.sicw")), FormatError);
}
