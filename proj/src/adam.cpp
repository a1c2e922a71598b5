#include "omcl/adam.hpp"

#include <cmath>

namespace omcl {

AdamState make_adam_state(const Tensor& param) {
  AdamState st;
  st.m = Tensor::zeros(param.shape);
  st.v = Tensor::zeros(param.shape);
  return st;
}

void adam_step(Tensor& param, const std::vector<double>& grad, AdamState& state,
               double lr) {
  if (grad.size() != param.data.size() || !param.same_shape(state.m))
    throw ShapeError("adam_step: parameter " + shape_str(param.shape) +
                     ", gradient of " + std::to_string(grad.size()) + " values");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    state.m.data[i] = state.beta1 * state.m.data[i] + (1.0 - state.beta1) * g;
    state.v.data[i] = state.beta2 * state.v.data[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m.data[i] / bc1;
    const double v_hat = state.v.data[i] / bc2;
    param.data[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

void AdamOptimizer::attach(Tensor* param, double lr_scale) {
  slots_.push_back(Slot{param, lr_scale, make_adam_state(*param)});
}

void AdamOptimizer::step(const std::vector<const std::vector<double>*>& grads,
                         double lr) {
  if (grads.size() != slots_.size())
    throw Error("optimizer got " + std::to_string(grads.size()) + " gradients for " +
                std::to_string(slots_.size()) + " parameters");
  for (size_t i = 0; i < slots_.size(); ++i)
    adam_step(*slots_[i].param, *grads[i], slots_[i].state, lr * slots_[i].lr_scale);
}

}  // namespace omcl
