#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "icefuse/model/config.hpp"
#include "icefuse/model/parameters.hpp"
#include "icefuse/numkernel/graph.hpp"

namespace icefuse::model {

/// Parameter name -> graph var. Built by bind_parameters() or, for the
/// Bayesian model, by sampling (see bayes/variational.hpp).
using BoundWeights = std::map<std::string, nk::Var, std::less<>>;

/// Returns an already scaled (0 or 1/keep) mask for a dropout site, or
/// nothing to leave the site inactive. Sites are "stage<s>.{glo,mlp1,lo,mlp2}".
using DropoutProvider = std::function<std::optional<nk::Tensor>(const std::string& site, const nk::Shape& shape)>;

/// Leaves that view the tensors of `params` without copying; `params` must
/// outlive the graph.
BoundWeights bind_parameters(nk::Graph& g, const ParameterSet& params, bool requires_grad);

/// Projections of one multi-head attention block.
struct AttentionVars {
  nk::Var wq, wk, wv, wo;
};

AttentionVars attention_vars(const BoundWeights& w, const std::string& prefix);

/// x[N, S, E] -> [N, S, E]: per head softmax(Q K^T / sqrt(E/heads)) V, heads
/// concatenated and output-projected. Optionally exposes the attention
/// probabilities [N, heads, S, S].
nk::Var multi_head_attention(nk::Var x, const AttentionVars& w, std::size_t heads,
                             std::optional<nk::Var>* probabilities = nullptr);

/// [B, C, H0, W0] -> [B, T, window*window*hidden]; token features are laid
/// out (patch row, patch col, hidden) so the local view is a plain reshape.
nk::Var patch_merge(nk::Var x, nk::Var weight, nk::Var bias, const ModelConfig& cfg);

/// Among-token attention before the residual connection.
nk::Var gloformer_attention(nk::Var tokens, const AttentionVars& w, const ModelConfig& cfg,
                            std::optional<nk::Var>* probabilities = nullptr);
/// Within-token attention before the residual connection: tokens are viewed
/// as [B*T, window*window, hidden] and never attend across token borders.
nk::Var loformer_attention(nk::Var tokens, const AttentionVars& w, const ModelConfig& cfg,
                           std::optional<nk::Var>* probabilities = nullptr);

/// One stage: pre-norm GloFormer, MLP, LoFormer, MLP, each with a residual add.
nk::Var stage_forward(nk::Var tokens, const BoundWeights& w, std::size_t stage, const ModelConfig& cfg,
                      const DropoutProvider& dropout = {});

/// Per-patch projection of the concatenated stage outputs to patch*patch
/// logits, pixel-shuffled to [B, 1, H0, W0], then 100 * sigmoid.
nk::Var interpolation_head(const std::vector<nk::Var>& stage_outputs, const BoundWeights& w, const ModelConfig& cfg);

/// Full model: [B, C, H0, W0] -> SIC percent [B, 1, H0, W0].
nk::Var forward(nk::Var x, const BoundWeights& w, const ModelConfig& cfg, const DropoutProvider& dropout = {});

/// Value-only forward with a deterministic parameter set.
nk::Tensor predict(const ParameterSet& params, const nk::Tensor& x, const ModelConfig& cfg,
                   const DropoutProvider& dropout = {});

}  // namespace icefuse::model
