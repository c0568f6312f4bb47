#pragma once

#include <cstddef>
#include <vector>

#include "icefuse/numkernel/graph.hpp"

// Differentiable primitives. Every op records one node on the graph of its
// inputs; mixing vars from different graphs is a contract error.

namespace icefuse::nk {

/// a[..., m, k] x b[k, n] (shared right operand) or a[..., m, k] x b[..., k, n]
/// with identical leading extents.
Var matmul(Var a, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// a[..., n] + b[n]: the only broadcast supported (trailing axis).
Var add_trailing(Var a, Var b);

Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var softmax_lastdim(Var x);
/// Normalizes over the last axis, then applies gamma[n], beta[n].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Exact (erf-based) GELU.
Var gelu(Var x);
Var sigmoid(Var x);
/// log(1 + exp(x)), evaluated stably.
Var softplus(Var x);
Var log(Var x);
/// Subgradient 0 at the kink.
Var abs(Var x);

Var reshape(Var x, Shape shape);
/// Generalised transpose: output axis i is input axis perm[i].
Var permute(Var x, std::vector<std::size_t> perm);

/// Reductions to a rank-0 scalar.
Var sum(Var x);
Var mean(Var x);

/// out.flat[i] = x.flat[index[i]]; the backward pass scatter-adds.
Var gather(Var x, std::vector<std::size_t> index, Shape out_shape);

// Value-level helpers shared with tests and inference paths.
namespace kernels {
void matmul_into(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate);
Tensor softmax_lastdim(const Tensor& x);
double erf_gelu(double x) noexcept;
}  // namespace kernels

}  // namespace icefuse::nk
