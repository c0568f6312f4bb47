#include "icefuse/model/transformer.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "icefuse/common/error.hpp"
#include "icefuse/numkernel/ops.hpp"

namespace icefuse::model {

namespace {

const nk::Var& lookup(const BoundWeights& w, const std::string& name) {
  const auto it = w.find(name);
  if (it == w.end()) throw ConfigError("model weight '" + name + "' is not bound");
  return it->second;
}

void expect_shape(const nk::Var& v, const nk::Shape& shape, const char* what) {
  if (v.shape() != shape)
    throw DimensionError(std::string(what) + ": expected " + nk::shape_string(shape) + ", got " +
                         nk::shape_string(v.shape()));
}

nk::Var dense(nk::Var x, const BoundWeights& w, const std::string& weight, const std::string& bias) {
  return nk::add_trailing(nk::matmul(x, lookup(w, weight)), lookup(w, bias));
}

nk::Var norm(nk::Var x, const BoundWeights& w, const std::string& prefix) {
  return nk::layer_norm(x, lookup(w, prefix + ".norm.g"), lookup(w, prefix + ".norm.b"));
}

nk::Var apply_dropout(nk::Var x, const DropoutProvider& dropout, const std::string& site) {
  if (!dropout) return x;
  auto mask = dropout(site, x.shape());
  if (!mask) return x;
  return nk::mul(x, x.graph->constant(std::move(*mask)));
}

// [B, T, HW*F] viewed per patch -> F -> ratio*F -> F.
nk::Var patch_mlp(nk::Var tokens, const BoundWeights& w, const std::string& prefix, const ModelConfig& cfg) {
  const auto& s = tokens.shape();
  auto x = nk::reshape(tokens, {s[0], s[1], cfg.patches_per_token(), cfg.hidden});
  x = norm(x, w, prefix);
  x = nk::gelu(dense(x, w, prefix + ".w1", prefix + ".b1"));
  x = dense(x, w, prefix + ".w2", prefix + ".b2");
  return nk::reshape(x, s);
}

}  // namespace

BoundWeights bind_parameters(nk::Graph& g, const ParameterSet& params, bool requires_grad) {
  BoundWeights out;
  for (const auto& [name, t] : params) {
    // Non-owning alias: the caller keeps params alive for the graph's lifetime.
    std::shared_ptr<const nk::Tensor> view(std::shared_ptr<const nk::Tensor>(), &t);
    out.emplace(name, g.leaf(std::move(view), requires_grad));
  }
  return out;
}

AttentionVars attention_vars(const BoundWeights& w, const std::string& prefix) {
  return {lookup(w, prefix + ".wq"), lookup(w, prefix + ".wk"), lookup(w, prefix + ".wv"), lookup(w, prefix + ".wo")};
}

nk::Var multi_head_attention(nk::Var x, const AttentionVars& w, std::size_t heads,
                             std::optional<nk::Var>* probabilities) {
  if (x.shape().size() != 3) throw DimensionError("attention input must be [N, S, E], got " + nk::shape_string(x.shape()));
  const std::size_t n = x.shape()[0], s = x.shape()[1], e = x.shape()[2];
  if (heads == 0 || e % heads != 0)
    throw DimensionError("embedding " + std::to_string(e) + " not divisible by " + std::to_string(heads) + " heads");
  const std::size_t dk = e / heads;
  for (const auto* p : {&w.wq, &w.wk, &w.wv, &w.wo}) expect_shape(*p, {e, e}, "attention projection");

  auto split = [&](nk::Var v) { return nk::permute(nk::reshape(v, {n, s, heads, dk}), {0, 2, 1, 3}); };
  const auto q = split(nk::matmul(x, w.wq));
  const auto k = nk::permute(nk::reshape(nk::matmul(x, w.wk), {n, s, heads, dk}), {0, 2, 3, 1});
  const auto v = split(nk::matmul(x, w.wv));

  const auto scores = nk::scale(nk::matmul(q, k), 1.0 / std::sqrt(static_cast<double>(dk)));
  const auto probs = nk::softmax_lastdim(scores);
  if (probabilities != nullptr) *probabilities = probs;
  const auto ctx = nk::reshape(nk::permute(nk::matmul(probs, v), {0, 2, 1, 3}), {n, s, e});
  return nk::matmul(ctx, w.wo);
}

nk::Var patch_merge(nk::Var x, nk::Var weight, nk::Var bias, const ModelConfig& cfg) {
  const auto& xs = x.shape();
  if (xs.size() != 4 || xs[1] != cfg.channels || xs[2] != cfg.chip || xs[3] != cfg.chip)
    throw DimensionError("model input must be [B, " + std::to_string(cfg.channels) + ", " + std::to_string(cfg.chip) +
                         ", " + std::to_string(cfg.chip) + "], got " + nk::shape_string(xs));
  expect_shape(weight, {cfg.patch_features(), cfg.hidden}, "patch embedding");
  expect_shape(bias, {cfg.hidden}, "patch embedding bias");

  const std::size_t b = xs[0], c = cfg.channels, h0 = cfg.chip, p = cfg.patch, hw = cfg.window;
  const std::size_t tw = cfg.tokens_per_side(), t = cfg.tokens(), pp = cfg.patches_per_token();
  std::vector<std::size_t> index;
  index.reserve(b * t * pp * cfg.patch_features());
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ty = 0; ty < tw; ++ty)
      for (std::size_t tx = 0; tx < tw; ++tx)
        for (std::size_t py = 0; py < hw; ++py)
          for (std::size_t px = 0; px < hw; ++px)
            for (std::size_t ci = 0; ci < c; ++ci)
              for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < p; ++j) {
                  const std::size_t y = (ty * hw + py) * p + i;
                  const std::size_t xc = (tx * hw + px) * p + j;
                  index.push_back(((bi * c + ci) * h0 + y) * h0 + xc);
                }
  const auto patches = nk::gather(x, std::move(index), {b, t, pp, cfg.patch_features()});
  const auto embedded = nk::add_trailing(nk::matmul(patches, weight), bias);
  return nk::reshape(embedded, {b, t, cfg.token_dim()});
}

nk::Var gloformer_attention(nk::Var tokens, const AttentionVars& w, const ModelConfig& cfg,
                            std::optional<nk::Var>* probabilities) {
  const auto& s = tokens.shape();
  if (s.size() != 3 || s[2] != cfg.token_dim())
    throw DimensionError("tokens must be [B, T, " + std::to_string(cfg.token_dim()) + "], got " + nk::shape_string(s));
  return multi_head_attention(tokens, w, cfg.heads, probabilities);
}

nk::Var loformer_attention(nk::Var tokens, const AttentionVars& w, const ModelConfig& cfg,
                           std::optional<nk::Var>* probabilities) {
  const auto& s = tokens.shape();
  if (s.size() != 3 || s[2] != cfg.token_dim())
    throw DimensionError("tokens must be [B, T, " + std::to_string(cfg.token_dim()) + "], got " + nk::shape_string(s));
  const auto local = nk::reshape(tokens, {s[0] * s[1], cfg.patches_per_token(), cfg.hidden});
  return nk::reshape(multi_head_attention(local, w, cfg.heads, probabilities), s);
}

nk::Var stage_forward(nk::Var tokens, const BoundWeights& w, std::size_t stage, const ModelConfig& cfg,
                      const DropoutProvider& dropout) {
  const std::string p = "stage" + std::to_string(stage);
  const auto& s = tokens.shape();

  auto x = tokens;
  auto glo = gloformer_attention(norm(x, w, p + ".glo"), attention_vars(w, p + ".glo"), cfg);
  x = nk::add(x, apply_dropout(glo, dropout, p + ".glo"));

  x = nk::add(x, apply_dropout(patch_mlp(x, w, p + ".mlp1", cfg), dropout, p + ".mlp1"));

  auto local = nk::reshape(x, {s[0], s[1], cfg.patches_per_token(), cfg.hidden});
  auto normed = nk::reshape(norm(local, w, p + ".lo"), s);
  auto lo = loformer_attention(normed, attention_vars(w, p + ".lo"), cfg);
  x = nk::add(x, apply_dropout(lo, dropout, p + ".lo"));

  x = nk::add(x, apply_dropout(patch_mlp(x, w, p + ".mlp2", cfg), dropout, p + ".mlp2"));
  return x;
}

nk::Var interpolation_head(const std::vector<nk::Var>& stage_outputs, const BoundWeights& w, const ModelConfig& cfg) {
  if (stage_outputs.size() != cfg.stages)
    throw DimensionError("head expects " + std::to_string(cfg.stages) + " stage outputs, got " +
                         std::to_string(stage_outputs.size()));
  const auto& s = stage_outputs.front().shape();
  const std::size_t b = s[0], t = s[1], pp = cfg.patches_per_token(), p2 = cfg.patch * cfg.patch;

  std::optional<nk::Var> logits;
  for (std::size_t k = 0; k < stage_outputs.size(); ++k) {
    const auto z = nk::reshape(stage_outputs[k], {b, t, pp, cfg.hidden});
    const auto term = nk::matmul(z, lookup(w, "head.w" + std::to_string(k)));
    logits = logits ? nk::add(*logits, term) : term;
  }
  const auto biased = nk::add_trailing(*logits, lookup(w, "head.b"));

  const std::size_t h0 = cfg.chip, p = cfg.patch, hw = cfg.window, tw = cfg.tokens_per_side();
  std::vector<std::size_t> index;
  index.reserve(b * h0 * h0);
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t y = 0; y < h0; ++y)
      for (std::size_t x = 0; x < h0; ++x) {
        const std::size_t ty = y / (p * hw), py = (y / p) % hw, i = y % p;
        const std::size_t tx = x / (p * hw), px = (x / p) % hw, j = x % p;
        index.push_back((((bi * t + ty * tw + tx) * pp + py * hw + px) * p2) + i * p + j);
      }
  const auto image = nk::gather(biased, std::move(index), {b, 1, h0, h0});
  return nk::scale(nk::sigmoid(image), 100.0);
}

nk::Var forward(nk::Var x, const BoundWeights& w, const ModelConfig& cfg, const DropoutProvider& dropout) {
  cfg.validate();
  auto tokens = patch_merge(x, lookup(w, "embed.w"), lookup(w, "embed.b"), cfg);
  std::vector<nk::Var> outputs;
  outputs.reserve(cfg.stages);
  for (std::size_t s = 0; s < cfg.stages; ++s) {
    tokens = stage_forward(tokens, w, s, cfg, dropout);
    outputs.push_back(tokens);
  }
  return interpolation_head(outputs, w, cfg);
}

nk::Tensor predict(const ParameterSet& params, const nk::Tensor& x, const ModelConfig& cfg,
                   const DropoutProvider& dropout) {
  nk::Graph g;
  const auto w = bind_parameters(g, params, false);
  return forward(g.leaf(x), w, cfg, dropout).value();
}

}  // namespace icefuse::model
