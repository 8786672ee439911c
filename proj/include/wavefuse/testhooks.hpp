#pragma once

#include <cstdlib>
#include <string>

#include "wavefuse/tensor.hpp"

namespace wavefuse::testhooks {

// Fault-injection switch for mutation testing of the verification suite.
// WAVEFUSE_MUTATE names the active mutation; production runs leave it unset.
inline bool mutation_enabled(const char* name) {
  const char* env = std::getenv("WAVEFUSE_MUTATE");
  return env != nullptr && std::string(env) == name;
}

// Identity in the forward pass; flips the gradient sign when the named
// mutation is active.
template <typename T>
Tensor<T> mutate_grad_sign(const Tensor<T>& x, const char* name) {
  if (!mutation_enabled(name)) return x;
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::vector<T>(x.data()), {x},
                            [xn](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[i] -= self.grad[i];
                            });
}

}  // namespace wavefuse::testhooks
