#include "omcl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace omcl {

namespace {

double eval_scalar(const ScalarFn& f, const std::vector<Tensor>& point) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(g.leaf(t));
  const Var out = f(g, leaves);
  const Tensor& v = g.value(out);
  if (v.size() != 1)
    throw ShapeError("gradcheck: function output must be scalar, got shape " +
                     shape_str(v.shape));
  return v.item();
}

}  // namespace

GradCheckReport gradcheck(const ScalarFn& f, const std::vector<Tensor>& point,
                          double step, double tolerance) {
  if (step <= 0.0) throw Error("gradcheck: step must be positive");

  // Analytic pass.
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const Tensor& t : point) leaves.push_back(g.leaf(t));
  const Var out = f(g, leaves);
  if (g.value(out).size() != 1)
    throw ShapeError("gradcheck: function output must be scalar, got shape " +
                     shape_str(g.value(out).shape));
  if (!std::isfinite(g.value(out).item()))
    throw NumericError("gradcheck: non-finite loss at base point");
  g.backward(out);

  GradCheckReport report;
  std::vector<Tensor> probe = point;
  for (size_t p = 0; p < point.size(); ++p) {
    const std::vector<double>& analytic = g.grad(leaves[p]);
    for (size_t i = 0; i < probe[p].data.size(); ++i) {
      const double saved = probe[p].data[i];
      probe[p].data[i] = saved + step;
      const double f_plus = eval_scalar(f, probe);
      probe[p].data[i] = saved - step;
      const double f_minus = eval_scalar(f, probe);
      probe[p].data[i] = saved;

      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw NumericError("gradcheck: non-finite gradient at parameter " +
                           std::to_string(p) + " coordinate " + std::to_string(i));
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1.0});
      const double rel = std::fabs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = static_cast<int>(p);
        report.worst_coord = static_cast<int64_t>(i);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
      if (rel > tolerance)
        report.failures.push_back(GradCheckFailure{static_cast<int>(p),
                                                   static_cast<int64_t>(i), a, numeric,
                                                   rel});
    }
  }
  return report;
}

}  // namespace omcl
