#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "replysent/tensor.hpp"

namespace replysent::nn {

// Adam moment buffers for a fixed parameter list. Buffers are created on the
// first step and must stay aligned with the same parameters afterwards.
template <typename T>
struct AdamState {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
  long long step_count = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

// Bias-corrected Adam update with classical L2 decay: lambda * theta is
// added to the gradient before the moment updates. Gradients are zeroed
// after the step.
template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, T learning_rate,
               T weight_decay) {
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Parameter<T>* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw NumericError("adam_step: state tracks " + std::to_string(state.m.size()) +
                       " parameters, got " + std::to_string(params.size()));
  }
  state.step_count += 1;
  const T t = static_cast<T>(state.step_count);
  const T bc1 = T(1) - std::pow(state.beta1, t);
  const T bc2 = T(1) - std::pow(state.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter<T>& p = *params[k];
    if (!p.value.same_shape(state.m[k])) {
      throw NumericError("adam_step: parameter '" + p.name + "' shape " +
                         p.value.shape_string() + " does not match state " +
                         state.m[k].shape_string());
    }
    Tensor<T>& m = state.m[k];
    Tensor<T>& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i] + weight_decay * p.value[i];
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g * g;
      const T m_hat = m[i] / bc1;
      const T v_hat = v[i] / bc2;
      p.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
      if (!std::isfinite(static_cast<double>(p.value[i]))) {
        throw NumericError("adam_step: parameter '" + p.name + "' became non-finite");
      }
    }
    p.zero_grad();
  }
}

}  // namespace replysent::nn
