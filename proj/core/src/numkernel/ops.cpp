#include "icefuse/numkernel/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "icefuse/common/error.hpp"

namespace icefuse::nk {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ContractError("operation on an unbound Var");
  return *a.graph;
}

Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
  return graph_of(a);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <typename F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

// Elementwise op whose derivative depends only on the input value.
template <typename F, typename D>
Var unary(Var x, F f, D df) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  Tensor out = map_unary(xv, f);
  const Tensor* xp = &xv;
  return g.record(std::move(out), {x}, [xp, df](const Tensor& dy, std::span<Tensor* const> dx) {
    if (!dx[0]) return;
    const auto in = xp->data();
    const auto gy = dy.data();
    auto gx = dx[0]->data();
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += gy[i] * df(in[i]);
  });
}

double normal_pdf(double x) noexcept { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double sigmoid_scalar(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// Values held by a Graph node never move once recorded (nodes store them by
// shared_ptr), so backward closures may keep raw pointers to input values.

namespace kernels {

void matmul_into(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate) {
  const auto mi = static_cast<Eigen::Index>(m);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto ni = static_cast<Eigen::Index>(n);
  MutMap cm(c, mi, ni);
  if (accumulate)
    cm.noalias() += ConstMap(a, mi, ki) * ConstMap(b, ki, ni);
  else
    cm.noalias() = ConstMap(a, mi, ki) * ConstMap(b, ki, ni);
}

Tensor softmax_lastdim(const Tensor& x) {
  Tensor out(x.shape());
  const std::size_t n = x.rank() == 0 ? 1 : x.shape().back();
  const std::size_t rows = x.numel() / n;
  const double* in = x.data().data();
  double* o = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = in + r * n;
    double* yi = o + r * n;
    const double mx = *std::max_element(xi, xi + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      total += yi[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j) yi[j] *= inv;
  }
  return out;
}

double erf_gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

}  // namespace kernels

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 2 || bv.rank() < 2)
    throw DimensionError("matmul: operands must have rank >= 2, got " + shape_string(av.shape()) + " and " +
                         shape_string(bv.shape()));
  const std::size_t m = av.shape()[av.rank() - 2];
  const std::size_t k = av.shape().back();
  const std::size_t kb = bv.shape()[bv.rank() - 2];
  const std::size_t n = bv.shape().back();
  if (k != kb)
    throw DimensionError("matmul: inner extents differ " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));

  const bool shared = bv.rank() == 2;
  std::size_t batch = av.numel() / (m * k);
  if (!shared) {
    if (bv.rank() != av.rank() ||
        !std::equal(av.shape().begin(), av.shape().end() - 2, bv.shape().begin(), bv.shape().end() - 2))
      throw DimensionError("matmul: batch extents differ " + shape_string(av.shape()) + " x " +
                           shape_string(bv.shape()));
  }

  Shape out_shape(av.shape().begin(), av.shape().end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape);
  const double* ap = av.data().data();
  const double* bp = bv.data().data();
  double* op = out.data().data();
  if (shared) {
    // Leading axes fold into the row count.
    kernels::matmul_into(ap, bp, op, batch * m, k, n, false);
  } else {
    for (std::size_t i = 0; i < batch; ++i)
      kernels::matmul_into(ap + i * m * k, bp + i * k * n, op + i * m * n, m, k, n, false);
  }

  const Tensor* ax = &av;
  const Tensor* bx = &bv;
  return g.record(std::move(out), {a, b},
                  [ax, bx, m, k, n, batch, shared](const Tensor& dy, std::span<Tensor* const> dx) {
                    const double* gy = dy.data().data();
                    const double* ap = ax->data().data();
                    const double* bp = bx->data().data();
                    if (shared) {
                      const auto rows = static_cast<Eigen::Index>(batch * m);
                      const auto ki = static_cast<Eigen::Index>(k);
                      const auto ni = static_cast<Eigen::Index>(n);
                      ConstMap gym(gy, rows, ni);
                      if (dx[0]) {
                        MutMap(dx[0]->data().data(), rows, ki).noalias() += gym * ConstMap(bp, ki, ni).transpose();
                      }
                      if (dx[1]) {
                        MutMap(dx[1]->data().data(), ki, ni).noalias() += ConstMap(ap, rows, ki).transpose() * gym;
                      }
                      return;
                    }
                    const auto mi = static_cast<Eigen::Index>(m);
                    const auto ki = static_cast<Eigen::Index>(k);
                    const auto ni = static_cast<Eigen::Index>(n);
                    for (std::size_t i = 0; i < batch; ++i) {
                      ConstMap gym(gy + i * m * n, mi, ni);
                      if (dx[0]) {
                        MutMap(dx[0]->data().data() + i * m * k, mi, ki).noalias() +=
                            gym * ConstMap(bp + i * k * n, ki, ni).transpose();
                      }
                      if (dx[1]) {
                        MutMap(dx[1]->data().data() + i * k * n, ki, ni).noalias() +=
                            ConstMap(ap + i * m * k, mi, ki).transpose() * gym;
                      }
                    }
                  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto o = out.data();
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return g.record(std::move(out), {a, b}, [](const Tensor& dy, std::span<Tensor* const> dx) {
    const auto gy = dy.data();
    for (Tensor* t : dx) {
      if (!t) continue;
      auto gx = t->data();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
  });
}

Var sub(Var a, Var b) {
  Graph& g = graph_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return g.record(std::move(out), {a, b}, [](const Tensor& dy, std::span<Tensor* const> dx) {
    const auto gy = dy.data();
    if (dx[0]) {
      auto gx = dx[0]->data();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
    if (dx[1]) {
      auto gx = dx[1]->data();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] -= gy[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  auto o = out.data();
  const auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  const Tensor* ax = &av;
  const Tensor* bx = &bv;
  return g.record(std::move(out), {a, b}, [ax, bx](const Tensor& dy, std::span<Tensor* const> dx) {
    const auto gy = dy.data();
    if (dx[0]) {
      auto gx = dx[0]->data();
      const auto other = bx->data();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * other[i];
    }
    if (dx[1]) {
      auto gx = dx[1]->data();
      const auto other = ax->data();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * other[i];
    }
  });
}

Var add_trailing(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 1 || av.rank() == 0 || av.shape().back() != bv.numel())
    throw DimensionError("add_trailing: cannot broadcast " + shape_string(bv.shape()) + " onto " +
                         shape_string(av.shape()));
  const std::size_t n = bv.numel();
  Tensor out = av;
  auto o = out.data();
  const auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i % n];
  return g.record(std::move(out), {a, b}, [n](const Tensor& dy, std::span<Tensor* const> dx) {
    const auto gy = dy.data();
    if (dx[0]) {
      auto gx = dx[0]->data();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
    if (dx[1]) {
      auto gb = dx[1]->data();
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i % n] += gy[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var softmax_lastdim(Var x) {
  Graph& g = graph_of(x);
  auto out = std::make_shared<const Tensor>(kernels::softmax_lastdim(x.value()));
  const std::size_t n = x.value().rank() == 0 ? 1 : x.value().shape().back();
  const Tensor* yp = out.get();
  return g.record(std::move(out), {x}, [yp, n](const Tensor& dy, std::span<Tensor* const> dx) {
    if (!dx[0]) return;
    const double* yv = yp->data().data();
    const double* gy = dy.data().data();
    double* gx = dx[0]->data().data();
    const std::size_t rows = yp->numel() / n;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[r * n + j] * yv[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += yv[r * n + j] * (gy[r * n + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = graph_of(x, gamma);
  graph_of(x, beta);
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("layer_norm: rank-0 input");
  const std::size_t n = xv.shape().back();
  if (gamma.value().rank() != 1 || gamma.value().numel() != n || beta.value().shape() != gamma.value().shape())
    throw DimensionError("layer_norm: affine parameters must be [" + std::to_string(n) + "]");
  const std::size_t rows = xv.numel() / n;

  Tensor normed(xv.shape());
  std::vector<double> inv_std(rows);
  Tensor out(xv.shape());
  const double* in = xv.data().data();
  const double* gm = gamma.value().data().data();
  const double* bt = beta.value().data().data();
  double* xh = normed.data().data();
  double* o = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = in + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xi[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      xh[r * n + j] = (xi[j] - mu) * is;
      o[r * n + j] = xh[r * n + j] * gm[j] + bt[j];
    }
  }

  const Tensor* gp = &gamma.value();
  return g.record(std::move(out), {x, gamma, beta},
                  [normed = std::move(normed), inv_std = std::move(inv_std), gp, n, rows](
                      const Tensor& dy, std::span<Tensor* const> dx) {
                    const double* gy = dy.data().data();
                    const double* xh = normed.data().data();
                    const double* gm = gp->data().data();
                    if (dx[1] || dx[2]) {
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < n; ++j) {
                          if (dx[1]) (*dx[1])[j] += gy[r * n + j] * xh[r * n + j];
                          if (dx[2]) (*dx[2])[j] += gy[r * n + j];
                        }
                    }
                    if (!dx[0]) return;
                    double* gx = dx[0]->data().data();
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double mean_g = 0.0;
                      double mean_gx = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double gh = gy[r * n + j] * gm[j];
                        mean_g += gh;
                        mean_gx += gh * xh[r * n + j];
                      }
                      mean_g *= inv_n;
                      mean_gx *= inv_n;
                      for (std::size_t j = 0; j < n; ++j) {
                        const double gh = gy[r * n + j] * gm[j];
                        gx[r * n + j] += inv_std[r] * (gh - mean_g - xh[r * n + j] * mean_gx);
                      }
                    }
                  });
}

Var gelu(Var x) {
  return unary(
      x, [](double v) { return kernels::erf_gelu(v); },
      [](double v) { return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)) + v * normal_pdf(v); });
}

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return sigmoid_scalar(v); },
      [](double v) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 - s);
      });
}

Var softplus(Var x) {
  return unary(
      x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v) { return sigmoid_scalar(v); });
}

Var log(Var x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Var abs(Var x) {
  return unary(
      x, [](double v) { return std::abs(v); }, [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var reshape(Var x, Shape shape) {
  Graph& g = graph_of(x);
  Tensor out = x.value().reshaped(std::move(shape));
  return g.record(std::move(out), {x}, [](const Tensor& dy, std::span<Tensor* const> dx) {
    if (!dx[0]) return;
    const auto gy = dy.data();
    auto gx = dx[0]->data();
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

namespace {

// For each output flat index, the flat index of the input element.
std::vector<std::size_t> permutation_index(const Shape& in_shape, const std::vector<std::size_t>& perm) {
  const std::size_t r = in_shape.size();
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  const std::size_t total = shape_numel(in_shape);
  std::vector<std::size_t> index(total);
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t o = 0; o < total; ++o) {
    index[o] = offset;
    for (std::size_t ax = r; ax-- > 0;) {
      ++counter[ax];
      offset += stride[ax];
      if (counter[ax] < out_shape[ax]) break;
      offset -= stride[ax] * out_shape[ax];
      counter[ax] = 0;
    }
  }
  return index;
}

}  // namespace

Var permute(Var x, std::vector<std::size_t> perm) {
  const Shape& in_shape = x.value().shape();
  if (perm.size() != in_shape.size()) throw DimensionError("permute: axis count mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    if (p >= perm.size() || seen[p]) throw DimensionError("permute: not a permutation");
    seen[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  return gather(x, permutation_index(in_shape, perm), std::move(out_shape));
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return g.record(Tensor::scalar(total), {x}, [](const Tensor& dy, std::span<Tensor* const> dx) {
    if (!dx[0]) return;
    const double s = dy[0];
    for (double& v : dx[0]->data()) v += s;
  });
}

Var mean(Var x) {
  Graph& g = graph_of(x);
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  const double inv = 1.0 / static_cast<double>(x.value().numel());
  return g.record(Tensor::scalar(total * inv), {x}, [inv](const Tensor& dy, std::span<Tensor* const> dx) {
    if (!dx[0]) return;
    const double s = dy[0] * inv;
    for (double& v : dx[0]->data()) v += s;
  });
}

Var gather(Var x, std::vector<std::size_t> index, Shape out_shape) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  if (shape_numel(out_shape) != index.size())
    throw DimensionError("gather: index length " + std::to_string(index.size()) + " does not match shape " +
                         shape_string(out_shape));
  Tensor out(std::move(out_shape));
  const double* in = xv.data().data();
  double* o = out.data().data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.numel()) throw DimensionError("gather: index out of range");
    o[i] = in[index[i]];
  }
  return g.record(std::move(out), {x}, [index = std::move(index)](const Tensor& dy, std::span<Tensor* const> dx) {
    if (!dx[0]) return;
    const double* gy = dy.data().data();
    double* gx = dx[0]->data().data();
    for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += gy[i];
  });
}

}  // namespace icefuse::nk
