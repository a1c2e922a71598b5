#pragma once

#include <functional>
#include <vector>

#include "omcl/graph.hpp"

namespace omcl {

// Builds a scalar loss from leaf variables (one per point tensor).
using ScalarFn = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckFailure {
  int param;
  int64_t coord;
  double analytic;
  double numeric;
  double rel_err;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int worst_param = -1;
  int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t coords_checked = 0;
  std::vector<GradCheckFailure> failures;
  bool passed() const { return failures.empty(); }
};

// Compares reverse-mode gradients against central differences
// (f(x+h) - f(x-h)) / 2h at `point`, coordinate by coordinate.
// The relative error is |a - n| / max(|a|, |n|, 1). Throws NumericError,
// naming the coordinate, if any evaluation produces a non-finite value.
GradCheckReport gradcheck(const ScalarFn& f, const std::vector<Tensor>& point,
                          double step, double tolerance);

}  // namespace omcl
