#pragma once

#include <cmath>
#include <vector>

#include "wavefuse/tensor.hpp"

namespace wavefuse {

// Central-difference check of reverse-mode gradients. `f` evaluates a scalar
// loss from the current values of `params`; returns the max over all
// parameter entries of |g_ad - g_fd| / max(1, |g_fd|). Use 64-bit tensors;
// finite differences are not trustworthy in 32-bit.
template <typename F>
double grad_check(F&& f, std::vector<Tensor<double>> params, double h = 1e-6) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tensor<double> loss = f();
  if (!std::isfinite(loss.item())) throw EvalError("grad_check: non-finite loss");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    if (p.grad().empty())
      analytic.emplace_back(p.size(), 0.0);
    else
      analytic.push_back(p.grad());
  }

  double max_err = 0.0;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& data = params[pi].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double plus = f().item();
      data[i] = orig - h;
      const double minus = f().item();
      data[i] = orig;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw EvalError("grad_check: non-finite loss during perturbation");
      const double fd = (plus - minus) / (2.0 * h);
      const double err = std::abs(analytic[pi][i] - fd) / std::max(1.0, std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace wavefuse
