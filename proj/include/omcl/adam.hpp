#pragma once

#include <cstdint>
#include <vector>

#include "omcl/tensor.hpp"

namespace omcl {

// Per-parameter Adam accumulators. Moment buffers start at zero and the
// step counter advances by exactly one per update.
struct AdamState {
  Tensor m, v;
  int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_state(const Tensor& param);

// One bias-corrected Adam update of `param` in place.
void adam_step(Tensor& param, const std::vector<double>& grad, AdamState& state,
               double lr);

// Convenience wrapper over a set of parameters, each with its own learning
// rate multiplier (the scale parameter trains at 0.1x the model rate).
class AdamOptimizer {
 public:
  // Registers a parameter; `lr_scale` multiplies the step learning rate.
  void attach(Tensor* param, double lr_scale = 1.0);
  void step(const std::vector<const std::vector<double>*>& grads, double lr);
  size_t size() const { return slots_.size(); }

 private:
  struct Slot {
    Tensor* param;
    double lr_scale;
    AdamState state;
  };
  std::vector<Slot> slots_;
};

}  // namespace omcl
