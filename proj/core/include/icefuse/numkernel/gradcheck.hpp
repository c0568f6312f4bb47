#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "icefuse/numkernel/graph.hpp"

namespace icefuse::nk {

/// Builds a scalar loss from parameter leaves on a fresh graph.
using ScalarFunction = std::function<Var(Graph&, std::span<const Var> params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

/// Worst elementwise relative error max(|a-n| / max(|a|, |n|, 1e-12)) between
/// backward() and central differences with the given step.
GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& params, double step = 1e-4,
                           double tolerance = 1e-5);

double relative_error(double analytic, double numeric) noexcept;

}  // namespace icefuse::nk
