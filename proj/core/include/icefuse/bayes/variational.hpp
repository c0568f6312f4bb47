#pragma once

#include <cstdint>
#include <string_view>

#include "icefuse/model/parameters.hpp"
#include "icefuse/model/transformer.hpp"
#include "icefuse/numkernel/graph.hpp"

namespace icefuse::bayes {

/// Diagonal Gaussian posterior over one weight tensor; sigma = softplus(rho).
struct VariationalTensor {
  nk::Tensor mu;
  nk::Tensor rho;

  nk::Tensor sigma() const;
};

/// rho such that softplus(rho) == sigma.
double rho_for_sigma(double sigma);

/// KL(q || N(0, I)) = sum 1/2 (mu^2 + sigma^2 - 1 - ln sigma^2).
double kl_diag_gaussian(const VariationalTensor& v);
nk::Var kl_diag_gaussian(nk::Var mu, nk::Var rho);

/// Standard normal noise for tensor `name` under `seed`.
nk::Tensor sample_noise(const nk::Shape& shape, std::uint64_t seed, std::string_view name);

/// omega = mu + softplus(rho) * eps.
nk::Var reparameterize(nk::Var mu, nk::Var rho, const nk::Tensor& eps);
nk::Tensor sample_weights(const VariationalTensor& v, std::uint64_t seed, std::string_view name);

/// Deterministic parameter set holding one posterior draw of every
/// variational tensor; other tensors are copied through.
model::ParameterSet sample_parameter_set(const model::ParameterSet& params, std::uint64_t seed);

/// One reparameterized posterior draw recorded on `g`.
struct PosteriorSample {
  /// Every stored tensor (including .mu/.rho) as a leaf.
  model::BoundWeights leaves;
  /// Forward-ready weights: omega vars for variational tensors, leaves otherwise.
  model::BoundWeights weights;
  /// Summed KL over all variational tensors (rank 0).
  nk::Var kl;
};

PosteriorSample bind_posterior_sample(nk::Graph& g, const model::ParameterSet& params, std::uint64_t seed,
                                      bool requires_grad);

}  // namespace icefuse::bayes
