#include "icefuse/bayes/variational.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "icefuse/common/error.hpp"
#include "icefuse/common/rng.hpp"
#include "icefuse/numkernel/ops.hpp"

namespace icefuse::bayes {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// softplus(rho) and its derivative sigmoid(rho) from one exp.
struct Softplus {
  nk::Tensor sigma;
  nk::Tensor slope;
};

std::shared_ptr<const Softplus> softplus_of(const nk::Tensor& rho) {
  auto out = std::make_shared<Softplus>(Softplus{nk::Tensor(rho.shape()), nk::Tensor(rho.shape())});
  for (std::size_t i = 0; i < rho.numel(); ++i) {
    const double x = rho[i];
    const double e = std::exp(-std::abs(x));
    out->sigma[i] = std::max(x, 0.0) + std::log1p(e);
    out->slope[i] = x >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
  return out;
}

nk::Var kl_node(nk::Var mu, nk::Var rho, std::shared_ptr<const Softplus> sp) {
  const auto& m = mu.value();
  double total = 0;
  for (std::size_t i = 0; i < m.numel(); ++i) {
    const double s = sp->sigma[i];
    total += 0.5 * (m[i] * m[i] + s * s - 1.0) - std::log(s);
  }
  // d/dmu = mu; d/drho = (sigma - 1/sigma) * sigmoid(rho).
  return mu.graph->record(nk::Tensor::scalar(total), {mu, rho},
                          [&m, sp](const nk::Tensor& g, std::span<nk::Tensor* const> grads) {
                            const double go = g.item();
                            if (grads[0] != nullptr)
                              for (std::size_t i = 0; i < m.numel(); ++i) (*grads[0])[i] += go * m[i];
                            if (grads[1] != nullptr)
                              for (std::size_t i = 0; i < m.numel(); ++i) {
                                const double s = sp->sigma[i];
                                (*grads[1])[i] += go * (s - 1.0 / s) * sp->slope[i];
                              }
                          });
}

nk::Var reparameterize_node(nk::Var mu, nk::Var rho, nk::Tensor eps, std::shared_ptr<const Softplus> sp) {
  const auto& m = mu.value();
  nk::Tensor omega(m.shape());
  for (std::size_t i = 0; i < omega.numel(); ++i) omega[i] = m[i] + sp->sigma[i] * eps[i];
  return mu.graph->record(std::move(omega), {mu, rho},
                          [eps = std::move(eps), sp](const nk::Tensor& g, std::span<nk::Tensor* const> grads) {
                            if (grads[0] != nullptr)
                              for (std::size_t i = 0; i < g.numel(); ++i) (*grads[0])[i] += g[i];
                            if (grads[1] != nullptr)
                              for (std::size_t i = 0; i < g.numel(); ++i)
                                (*grads[1])[i] += g[i] * eps[i] * sp->slope[i];
                          });
}

void check_pair(const nk::Tensor& mu, const nk::Tensor& rho) {
  if (mu.shape() != rho.shape())
    throw DimensionError("variational tensor: mu " + nk::shape_string(mu.shape()) + " vs rho " +
                         nk::shape_string(rho.shape()));
}

std::string base_name(const std::string& mu_name) { return mu_name.substr(0, mu_name.size() - 3); }

}  // namespace

nk::Tensor VariationalTensor::sigma() const {
  check_pair(mu, rho);
  nk::Tensor s(rho.shape());
  for (std::size_t i = 0; i < s.numel(); ++i) s[i] = softplus(rho[i]);
  return s;
}

double rho_for_sigma(double sigma) {
  if (!(sigma > 0)) throw ContractError("sigma must be positive");
  // log(exp(sigma) - 1), written to stay finite for large sigma.
  return sigma > 30 ? sigma + std::log1p(-std::exp(-sigma)) : std::log(std::expm1(sigma));
}

double kl_diag_gaussian(const VariationalTensor& v) {
  const auto sigma = v.sigma();
  double total = 0;
  for (std::size_t i = 0; i < sigma.numel(); ++i) {
    const double s = sigma[i];
    total += 0.5 * (v.mu[i] * v.mu[i] + s * s - 1.0) - std::log(s);
  }
  return total;
}

nk::Var kl_diag_gaussian(nk::Var mu, nk::Var rho) {
  check_pair(mu.value(), rho.value());
  return kl_node(mu, rho, softplus_of(rho.value()));
}

nk::Tensor sample_noise(const nk::Shape& shape, std::uint64_t seed, std::string_view name) {
  nk::Tensor eps(shape);
  const CounterRng rng(derive_key(seed, name));
  const std::size_t n = eps.numel();
  for (std::size_t k = 0; k < n; ++k) eps[k] = rng.gaussian(k);
  return eps;
}

nk::Var reparameterize(nk::Var mu, nk::Var rho, const nk::Tensor& eps) {
  check_pair(mu.value(), rho.value());
  if (eps.shape() != mu.shape()) throw DimensionError("noise shape differs from mu");
  return reparameterize_node(mu, rho, eps, softplus_of(rho.value()));
}

nk::Tensor sample_weights(const VariationalTensor& v, std::uint64_t seed, std::string_view name) {
  const auto sigma = v.sigma();
  auto omega = sample_noise(v.mu.shape(), seed, name);
  for (std::size_t i = 0; i < omega.numel(); ++i) omega[i] = v.mu[i] + sigma[i] * omega[i];
  return omega;
}

model::ParameterSet sample_parameter_set(const model::ParameterSet& params, std::uint64_t seed) {
  model::ParameterSet out;
  for (const auto& [name, t] : params) {
    if (name.ends_with(".rho")) continue;
    if (!name.ends_with(".mu")) {
      out.emplace(name, t);
      continue;
    }
    const auto base = base_name(name);
    const auto rho = params.find(base + ".rho");
    if (rho == params.end()) throw ConfigError("variational tensor '" + base + "' has mu but no rho");
    out.emplace(base, sample_weights({t, rho->second}, seed, base));
  }
  return out;
}

PosteriorSample bind_posterior_sample(nk::Graph& g, const model::ParameterSet& params, std::uint64_t seed,
                                      bool requires_grad) {
  PosteriorSample s{model::bind_parameters(g, params, requires_grad), {}, {}};
  std::optional<nk::Var> kl;
  for (const auto& [name, var] : s.leaves) {
    if (name.ends_with(".rho")) continue;
    if (!name.ends_with(".mu")) {
      s.weights.emplace(name, var);
      continue;
    }
    const auto base = base_name(name);
    const auto rho = s.leaves.find(base + ".rho");
    if (rho == s.leaves.end()) throw ConfigError("variational tensor '" + base + "' has mu but no rho");
    check_pair(var.value(), rho->second.value());
    const auto sp = softplus_of(rho->second.value());
    s.weights.emplace(base, reparameterize_node(var, rho->second, sample_noise(var.shape(), seed, base), sp));
    const auto term = kl_node(var, rho->second, sp);
    kl = kl ? nk::add(*kl, term) : term;
  }
  s.kl = kl ? *kl : g.constant(nk::Tensor::scalar(0.0));
  return s;
}

}  // namespace icefuse::bayes
