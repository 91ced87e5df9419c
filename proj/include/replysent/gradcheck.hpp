#pragma once

#include <algorithm>
#include <functional>
#include <span>
#include <vector>

#include "replysent/rng.hpp"
#include "replysent/tensor.hpp"

namespace replysent::nn {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Coordinates per parameter to probe; large parameters are subsampled
  // deterministically.
  std::size_t max_coords_per_param = static_cast<std::size_t>(-1);
  std::uint64_t sample_seed = 0x5eedc0de;
};

// Compares analytic gradients against central finite differences. Intended
// for T = double.
//
// `loss_value` evaluates the loss at the current parameter values (forward
// only). `accumulate_grads` runs one forward+backward pass, adding gradients
// into the parameters; it is called once after zeroing. Returns the maximum
// over probed coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename T>
double grad_check(const std::function<T()>& loss_value,
                  const std::function<void()>& accumulate_grads,
                  std::span<Parameter<T>* const> params, const GradCheckOptions& opt = {}) {
  for (Parameter<T>* p : params) p->zero_grad();
  accumulate_grads();

  RngStream rng(opt.sample_seed);
  const T eps = static_cast<T>(opt.epsilon);
  double worst = 0.0;
  for (Parameter<T>* p : params) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> coords;
    if (n <= opt.max_coords_per_param) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      coords.reserve(opt.max_coords_per_param);
      for (std::size_t k = 0; k < opt.max_coords_per_param; ++k) {
        coords.push_back(static_cast<std::size_t>(rng.below(n)));
      }
    }
    for (std::size_t i : coords) {
      const T saved = p->value[i];
      p->value[i] = saved + eps;
      const T up = loss_value();
      p->value[i] = saved - eps;
      const T down = loss_value();
      p->value[i] = saved;

      const double numeric = static_cast<double>(up - down) / (2.0 * static_cast<double>(eps));
      const double analytic = static_cast<double>(p->grad[i]);
      const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace replysent::nn
