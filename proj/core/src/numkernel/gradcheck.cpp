#include "icefuse/numkernel/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "icefuse/common/error.hpp"

namespace icefuse::nk {

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& params) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(g.leaf(p, false));
  return g.value(f(g, vars)).item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, const std::vector<Tensor>& params, double step,
                           double tolerance) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  for (const auto& p : params)
    if (!p.all_finite()) throw ContractError("grad_check: non-finite parameter");

  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(g.leaf(p, true));
    Var loss = f(g, vars);
    g.backward(loss);
    for (const Var& v : vars) analytic.push_back(g.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> probe = params;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].numel(); ++i) {
      const double original = probe[p][i];
      probe[p][i] = original + step;
      const double up = evaluate(f, probe);
      probe[p][i] = original - step;
      const double down = evaluate(f, probe);
      probe[p][i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(analytic[p][i], numeric);
      ++report.checked;
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report.max_rel_error = std::isfinite(err) ? err : HUGE_VAL;
        report.worst_param = p;
        report.worst_index = i;
        report.worst_analytic = analytic[p][i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace icefuse::nk
