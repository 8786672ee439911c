#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "wavefuse/rng.hpp"
#include "wavefuse/tensor.hpp"

namespace wavefuse {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

namespace detail {

template <typename T>
ECMap<T> as_mat(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return ECMap<T>(v.data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}
template <typename T>
EMap<T> as_mat(std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return EMap<T>(v.data(), static_cast<Eigen::Index>(rows),
                 static_cast<Eigen::Index>(cols));
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> y(a.size());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [an, bn](TensorNode<T>& self) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  an->grad[i] += self.grad[i];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  bn->grad[i] += self.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> y(a.size());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [an, bn](TensorNode<T>& self) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  an->grad[i] += self.grad[i];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  bn->grad[i] -= self.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> y(a.size());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [an, bn](TensorNode<T>& self) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  an->grad[i] += self.grad[i] * bn->value[i];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  bn->grad[i] += self.grad[i] * an->value[i];
                              }
                            });
}

template <typename T>
Tensor<T> divide(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "divide");
  std::vector<T> y(a.size());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] / bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [an, bn](TensorNode<T>& self) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  an->grad[i] += self.grad[i] / bn->value[i];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                  const T bi = bn->value[i];
                                  bn->grad[i] -= self.grad[i] * an->value[i] / (bi * bi);
                                }
                              }
                            });
}

// Ties route the gradient to the first argument.
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "minimum");
  std::vector<T> y(a.size());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] <= bv[i] ? av[i] : bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [an, bn](TensorNode<T>& self) {
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                const bool take_a = an->value[i] <= bn->value[i];
                                if (take_a && an->requires_grad) {
                                  an->ensure_grad();
                                  an->grad[i] += self.grad[i];
                                } else if (!take_a && bn->requires_grad) {
                                  bn->ensure_grad();
                                  bn->grad[i] += self.grad[i];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "maximum");
  std::vector<T> y(a.size());
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] >= bv[i] ? av[i] : bv[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(y), {a, b},
                            [an, bn](TensorNode<T>& self) {
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                const bool take_a = an->value[i] >= bn->value[i];
                                if (take_a && an->requires_grad) {
                                  an->ensure_grad();
                                  an->grad[i] += self.grad[i];
                                } else if (!take_a && bn->requires_grad) {
                                  bn->ensure_grad();
                                  bn->grad[i] += self.grad[i];
                                }
                              }
                            });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> scale_shift(const Tensor<T>& x, T alpha, T beta) {
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = alpha * xv[i] + beta;
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x},
                            [xn, alpha](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[i] += alpha * self.grad[i];
                            });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T alpha) {
  return scale_shift(x, alpha, T(0));
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x},
                            [xn](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                if (xn->value[i] > T(0)) xn->grad[i] += self.grad[i];
                            });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    // Split by sign for stability at large |x|.
    const T v = xv[i];
    if (v >= T(0)) {
      const T e = std::exp(-v);
      y[i] = T(1) / (T(1) + e);
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x},
                            [xn](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                const T s = self.value[i];
                                xn->grad[i] += self.grad[i] * s * (T(1) - s);
                              }
                            });
}

template <typename T>
Tensor<T> exp_op(const Tensor<T>& x) {
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(xv[i]);
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x},
                            [xn](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[i] += self.grad[i] * self.value[i];
                            });
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& x) {
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(xv[i]);
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x},
                            [xn](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[i] += self.grad[i] / xn->value[i];
                            });
}

template <typename T>
Tensor<T> abs_op(const Tensor<T>& x) {
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::abs(xv[i]);
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x},
                            [xn](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                const T v = xn->value[i];
                                if (v > T(0))
                                  xn->grad[i] += self.grad[i];
                                else if (v < T(0))
                                  xn->grad[i] -= self.grad[i];
                              }
                            });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  auto xn = x.node();
  return detail::make_op<T>(std::move(new_shape), std::vector<T>(x.data()), {x},
                            [xn](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[i] += self.grad[i];
                            });
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  if (x.ndim() != 2) throw ShapeError("transpose2d: expected rank 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = xv[i * c + j];
  auto xn = x.node();
  return detail::make_op<T>(Shape{c, r}, std::move(y), {x},
                            [xn, r, c](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j)
                                  xn->grad[i * c + j] += self.grad[j * r + i];
                            });
}

template <typename T>
Tensor<T> concat_lastdim(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != b.ndim() || a.ndim() == 0)
    throw ShapeError("concat_lastdim: rank mismatch");
  for (std::size_t i = 0; i + 1 < a.ndim(); ++i)
    if (a.dim(i) != b.dim(i))
      throw ShapeError("concat_lastdim: leading dims differ " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
  const std::size_t ca = a.dim(a.ndim() - 1), cb = b.dim(b.ndim() - 1);
  const std::size_t rows = a.size() / ca;
  Shape out_shape = a.shape();
  out_shape.back() = ca + cb;
  std::vector<T> y(rows * (ca + cb));
  const auto& av = a.data();
  const auto& bv = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(av.begin() + r * ca, av.begin() + (r + 1) * ca, y.begin() + r * (ca + cb));
    std::copy(bv.begin() + r * cb, bv.begin() + (r + 1) * cb,
              y.begin() + r * (ca + cb) + ca);
  }
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(std::move(out_shape), std::move(y), {a, b},
                            [an, bn, rows, ca, cb](TensorNode<T>& self) {
                              for (std::size_t r = 0; r < rows; ++r) {
                                if (an->requires_grad) {
                                  an->ensure_grad();
                                  for (std::size_t j = 0; j < ca; ++j)
                                    an->grad[r * ca + j] += self.grad[r * (ca + cb) + j];
                                }
                                if (bn->requires_grad) {
                                  bn->ensure_grad();
                                  for (std::size_t j = 0; j < cb; ++j)
                                    bn->grad[r * cb + j] += self.grad[r * (ca + cb) + ca + j];
                                }
                              }
                            });
}

template <typename T>
Tensor<T> slice_lastdim(const Tensor<T>& x, std::size_t from, std::size_t to) {
  const std::size_t c = x.dim(x.ndim() - 1);
  if (from >= to || to > c) throw ShapeError("slice_lastdim: bad range");
  const std::size_t rows = x.size() / c, w = to - from;
  Shape out_shape = x.shape();
  out_shape.back() = w;
  std::vector<T> y(rows * w);
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(xv.begin() + r * c + from, xv.begin() + r * c + to, y.begin() + r * w);
  auto xn = x.node();
  return detail::make_op<T>(std::move(out_shape), std::move(y), {x},
                            [xn, rows, c, from, w](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < w; ++j)
                                  xn->grad[r * c + from + j] += self.grad[r * w + j];
                            });
}

// Gather rows of a [R x C] tensor; indices are data, not differentiable.
template <typename T>
Tensor<T> select_rows(const Tensor<T>& x, std::vector<std::size_t> idx) {
  if (x.ndim() != 2) throw ShapeError("select_rows: expected rank 2");
  const std::size_t c = x.dim(1);
  std::vector<T> y(idx.size() * c);
  const auto& xv = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.dim(0)) throw ShapeError("select_rows: index out of range");
    std::copy(xv.begin() + idx[r] * c, xv.begin() + (idx[r] + 1) * c, y.begin() + r * c);
  }
  auto xn = x.node();
  const std::size_t n_rows = idx.size();
  return detail::make_op<T>(Shape{n_rows, c}, std::move(y), {x},
                            [xn, idx = std::move(idx), c](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t r = 0; r < idx.size(); ++r)
                                for (std::size_t j = 0; j < c; ++j)
                                  xn->grad[idx[r] * c + j] += self.grad[r * c + j];
                            });
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const std::size_t c = a.dim(1), ra = a.dim(0), rb = b.dim(0);
  std::vector<T> y;
  y.reserve((ra + rb) * c);
  y.insert(y.end(), a.data().begin(), a.data().end());
  y.insert(y.end(), b.data().begin(), b.data().end());
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(Shape{ra + rb, c}, std::move(y), {a, b},
                            [an, bn, ra, rb, c](TensorNode<T>& self) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (std::size_t i = 0; i < ra * c; ++i)
                                  an->grad[i] += self.grad[i];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (std::size_t i = 0; i < rb * c; ++i)
                                  bn->grad[i] += self.grad[ra * c + i];
                              }
                            });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t from, std::size_t to) {
  if (x.ndim() != 2 || from >= to || to > x.dim(0))
    throw ShapeError("slice_rows: bad range on " + shape_str(x.shape()));
  const std::size_t c = x.dim(1), r = to - from;
  std::vector<T> y(x.data().begin() + from * c, x.data().begin() + to * c);
  auto xn = x.node();
  return detail::make_op<T>(Shape{r, c}, std::move(y), {x},
                            [xn, from, r, c](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < r * c; ++i)
                                xn->grad[from * c + i] += self.grad[i];
                            });
}

// Each row repeated `reps` times in place: [N x C] -> [N*reps x C].
template <typename T>
Tensor<T> repeat_interleave_rows(const Tensor<T>& x, std::size_t reps) {
  if (x.ndim() != 2 || reps == 0) throw ShapeError("repeat_interleave_rows: bad arguments");
  const std::size_t n = x.dim(0), c = x.dim(1);
  std::vector<T> y(n * reps * c);
  const auto& xv = x.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < reps; ++r)
      std::copy(xv.begin() + i * c, xv.begin() + (i + 1) * c,
                y.begin() + (i * reps + r) * c);
  auto xn = x.node();
  return detail::make_op<T>(Shape{n * reps, c}, std::move(y), {x},
                            [xn, n, reps, c](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < n; ++i)
                                for (std::size_t r = 0; r < reps; ++r)
                                  for (std::size_t j = 0; j < c; ++j)
                                    xn->grad[i * c + j] +=
                                        self.grad[(i * reps + r) * c + j];
                            });
}

// Adds a length-C vector to every row of [R x C].
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  const std::size_t c = x.dim(x.ndim() - 1);
  if (v.size() != c)
    throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) + " vs last dim " +
                     std::to_string(c));
  const std::size_t rows = x.size() / c;
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  const auto& vv = v.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) y[r * c + j] = xv[r * c + j] + vv[j];
  auto xn = x.node(), vn = v.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x, v},
                            [xn, vn, rows, c](TensorNode<T>& self) {
                              if (xn->requires_grad) {
                                xn->ensure_grad();
                                for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  xn->grad[i] += self.grad[i];
                              }
                              if (vn->requires_grad) {
                                vn->ensure_grad();
                                for (std::size_t r = 0; r < rows; ++r)
                                  for (std::size_t j = 0; j < c; ++j)
                                    vn->grad[j] += self.grad[r * c + j];
                              }
                            });
}

// [C, H, W] feature map -> [(H*W) x C] token matrix, row-major over (y, x).
template <typename T>
Tensor<T> chw_to_tokens(const Tensor<T>& x) {
  if (x.ndim() != 3) throw ShapeError("chw_to_tokens: expected [C,H,W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), n = h * w;
  std::vector<T> y(n * c);
  const auto& xv = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < n; ++t) y[t * c + ch] = xv[ch * n + t];
  auto xn = x.node();
  return detail::make_op<T>(Shape{n, c}, std::move(y), {x},
                            [xn, c, n](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t ch = 0; ch < c; ++ch)
                                for (std::size_t t = 0; t < n; ++t)
                                  xn->grad[ch * n + t] += self.grad[t * c + ch];
                            });
}

template <typename T>
Tensor<T> tokens_to_chw(const Tensor<T>& x, std::size_t h, std::size_t w) {
  if (x.ndim() != 2 || x.dim(0) != h * w)
    throw ShapeError("tokens_to_chw: expected [" + std::to_string(h * w) + " x C], got " +
                     shape_str(x.shape()));
  const std::size_t c = x.dim(1), n = h * w;
  std::vector<T> y(n * c);
  const auto& xv = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < n; ++t) y[ch * n + t] = xv[t * c + ch];
  auto xn = x.node();
  return detail::make_op<T>(Shape{c, h, w}, std::move(y), {x},
                            [xn, c, n](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t ch = 0; ch < c; ++ch)
                                for (std::size_t t = 0; t < n; ++t)
                                  xn->grad[t * c + ch] += self.grad[ch * n + t];
                            });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  auto xn = x.node();
  return detail::make_op<T>(Shape{1}, std::vector<T>{s}, {x},
                            [xn](TensorNode<T>& self) {
                              xn->ensure_grad();
                              const T g = self.grad[0];
                              for (auto& gv : xn->grad) gv += g;
                            });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  if (x.size() == 0) throw ShapeError("mean_all: empty tensor");
  T s = 0;
  for (T v : x.data()) s += v;
  const T inv = T(1) / static_cast<T>(x.size());
  auto xn = x.node();
  return detail::make_op<T>(Shape{1}, std::vector<T>{s * inv}, {x},
                            [xn, inv](TensorNode<T>& self) {
                              xn->ensure_grad();
                              const T g = self.grad[0] * inv;
                              for (auto& gv : xn->grad) gv += g;
                            });
}

// Mean over the first axis of [R x C] -> [C].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  if (x.ndim() != 2 || x.dim(0) == 0) throw ShapeError("mean_rows: expected nonempty [R x C]");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> y(c, T(0));
  const auto& xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j] += xv[i * c + j];
  const T inv = T(1) / static_cast<T>(r);
  for (auto& v : y) v *= inv;
  auto xn = x.node();
  return detail::make_op<T>(Shape{c}, std::move(y), {x},
                            [xn, r, c, inv](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j)
                                  xn->grad[i * c + j] += self.grad[j] * inv;
                            });
}

// Sum over the last axis: [..., C] -> [...] (scalar shape {1} for rank 1).
template <typename T>
Tensor<T> sum_lastdim(const Tensor<T>& x) {
  const std::size_t c = x.dim(x.ndim() - 1);
  const std::size_t rows = x.size() / c;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape = Shape{1};
  std::vector<T> y(rows, T(0));
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) y[r] += xv[r * c + j];
  auto xn = x.node();
  return detail::make_op<T>(std::move(out_shape), std::move(y), {x},
                            [xn, rows, c](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < c; ++j)
                                  xn->grad[r * c + j] += self.grad[r];
                            });
}

// ---------------------------------------------------------------------------
// Softmax / losses
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  const std::size_t c = x.dim(x.ndim() - 1);
  const std::size_t rows = x.size() / c;
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T m = xv[r * c];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, xv[r * c + j]);
    T denom = 0;
    for (std::size_t j = 0; j < c; ++j) {
      y[r * c + j] = std::exp(xv[r * c + j] - m);
      denom += y[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) y[r * c + j] /= denom;
  }
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x},
                            [xn, rows, c](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t r = 0; r < rows; ++r) {
                                T dot = 0;
                                for (std::size_t j = 0; j < c; ++j)
                                  dot += self.grad[r * c + j] * self.value[r * c + j];
                                for (std::size_t j = 0; j < c; ++j)
                                  xn->grad[r * c + j] += self.value[r * c + j] *
                                                         (self.grad[r * c + j] - dot);
                              }
                            });
}

enum class ActivationKind { kRelu, kSigmoid, kSoftmaxLastDim };

inline ActivationKind parse_activation(const std::string& name) {
  if (name == "relu") return ActivationKind::kRelu;
  if (name == "sigmoid") return ActivationKind::kSigmoid;
  if (name == "softmax_lastdim") return ActivationKind::kSoftmaxLastDim;
  throw ConfigError("unknown activation kind: " + name);
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kRelu:
      return relu(x);
    case ActivationKind::kSigmoid:
      return sigmoid(x);
    case ActivationKind::kSoftmaxLastDim:
      return softmax_lastdim(x);
  }
  throw ConfigError("unknown activation kind");
}

// Weighted cross entropy on logits [N x C] with integer targets. The loss is
// sum_i w[t_i] * (-log softmax(logits_i)[t_i]) / N.
template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits,
                               const std::vector<int>& targets,
                               const std::vector<T>& class_weights) {
  if (logits.ndim() != 2) throw ShapeError("cross_entropy_logits: expected [N x C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (targets.size() != n) throw ShapeError("cross_entropy_logits: target count mismatch");
  if (class_weights.size() != c) throw ShapeError("cross_entropy_logits: weight count mismatch");
  const auto& xv = logits.data();
  std::vector<T> probs(n * c);
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    T m = xv[i * c];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, xv[i * c + j]);
    T denom = 0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(xv[i * c + j] - m);
      denom += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= denom;
    const int t = targets[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c)
      throw ShapeError("cross_entropy_logits: target out of range");
    const T log_p = (xv[i * c + t] - m) - std::log(denom);
    loss -= class_weights[t] * log_p;
  }
  loss /= static_cast<T>(n);
  auto xn = logits.node();
  return detail::make_op<T>(
      Shape{1}, std::vector<T>{loss}, {logits},
      [xn, n, c, targets, class_weights, probs = std::move(probs)](TensorNode<T>& self) {
        xn->ensure_grad();
        const T g = self.grad[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const T w = class_weights[targets[i]];
          for (std::size_t j = 0; j < c; ++j) {
            T d = probs[i * c + j];
            if (j == static_cast<std::size_t>(targets[i])) d -= T(1);
            xn->grad[i * c + j] += g * w * d;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Matrix / affine ops (Eigen-backed GEMM)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<T> y(n * m);
  detail::as_mat(y, n, m) = detail::as_mat(a.data(), n, k) * detail::as_mat(b.data(), k, m);
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(Shape{n, m}, std::move(y), {a, b},
                            [an, bn, n, k, m](TensorNode<T>& self) {
                              auto g = detail::as_mat(self.grad, n, m);
                              if (an->requires_grad) {
                                an->ensure_grad();
                                detail::as_mat(an->grad, n, k).noalias() +=
                                    g * detail::as_mat(bn->value, k, m).transpose();
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                detail::as_mat(bn->grad, k, m).noalias() +=
                                    detail::as_mat(an->value, n, k).transpose() * g;
                              }
                            });
}

// y[..., j] = sum_i W[j,i] x[..., i] + b[j]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.ndim() != 2) throw ShapeError("linear: weight must be [n_out x n_in]");
  const std::size_t n_out = w.dim(0), n_in = w.dim(1);
  if (x.ndim() == 0 || x.dim(x.ndim() - 1) != n_in)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  if (b.size() != n_out)
    throw ShapeError("linear: bias " + shape_str(b.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  const std::size_t rows = x.size() / n_in;
  Shape out_shape = x.shape();
  out_shape.back() = n_out;
  std::vector<T> y(rows * n_out);
  {
    auto ym = detail::as_mat(y, rows, n_out);
    ym.noalias() = detail::as_mat(x.data(), rows, n_in) *
                   detail::as_mat(w.data(), n_out, n_in).transpose();
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
        b.data().data(), static_cast<Eigen::Index>(n_out));
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(
      std::move(out_shape), std::move(y), {x, w, b},
      [xn, wn, bn, rows, n_in, n_out](TensorNode<T>& self) {
        auto g = detail::as_mat(self.grad, rows, n_out);
        if (xn->requires_grad) {
          xn->ensure_grad();
          detail::as_mat(xn->grad, rows, n_in).noalias() +=
              g * detail::as_mat(wn->value, n_out, n_in);
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          detail::as_mat(wn->grad, n_out, n_in).noalias() +=
              g.transpose() * detail::as_mat(xn->value, rows, n_in);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(
              bn->grad.data(), static_cast<Eigen::Index>(n_out)) += g.colwise().sum();
        }
      });
}

// ---------------------------------------------------------------------------
// Convolutions (im2col + GEMM; the column matrix is rebuilt in backward)
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t s,
                                   std::size_t p, const char* what) {
  const std::ptrdiff_t out =
      (static_cast<std::ptrdiff_t>(in) + 2 * static_cast<std::ptrdiff_t>(p) -
       static_cast<std::ptrdiff_t>(k)) /
          static_cast<std::ptrdiff_t>(s) +
      1;
  if (out <= 0)
    throw ShapeError(std::string(what) + ": non-positive output extent for input " +
                     std::to_string(in) + ", kernel " + std::to_string(k) + ", stride " +
                     std::to_string(s) + ", pad " + std::to_string(p));
  return static_cast<std::size_t>(out);
}

template <typename T>
void im2col_2d(const std::vector<T>& x, std::size_t cin, std::size_t h, std::size_t w,
               std::size_t kh, std::size_t kw, std::size_t s, std::size_t p,
               std::size_t ho, std::size_t wo, std::vector<T>& cols) {
  cols.assign(cin * kh * kw * ho * wo, T(0));
  const std::size_t area = ho * wo;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* dst = cols.data() + ((c * kh + ki) * kw + kj) * area;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ki) -
                                    static_cast<std::ptrdiff_t>(p);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kj) -
                                      static_cast<std::ptrdiff_t>(p);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[oy * wo + ox] = x[(c * h + static_cast<std::size_t>(iy)) * w +
                                  static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_2d(const std::vector<T>& cols, std::size_t cin, std::size_t h, std::size_t w,
               std::size_t kh, std::size_t kw, std::size_t s, std::size_t p,
               std::size_t ho, std::size_t wo, std::vector<T>& dx) {
  const std::size_t area = ho * wo;
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* src = cols.data() + ((c * kh + ki) * kw + kj) * area;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s + ki) -
                                    static_cast<std::ptrdiff_t>(p);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s + kj) -
                                      static_cast<std::ptrdiff_t>(p);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dx[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                src[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [C_in, H, W]; w: [C_out, C_in, kh, kw]; b: [C_out]. Zero padding `pad`,
// square stride.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t stride, std::size_t pad) {
  if (x.ndim() != 3 || w.ndim() != 4)
    throw ShapeError("conv2d: expected x [C,H,W], w [Co,Ci,kh,kw]");
  const std::size_t cin = x.dim(0), h = x.dim(1), wid = x.dim(2);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != cin)
    throw ShapeError("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(w.shape()));
  if (b.size() != cout) throw ShapeError("conv2d: bias size mismatch");
  const std::size_t ho = detail::conv_out_extent(h, kh, stride, pad, "conv2d");
  const std::size_t wo = detail::conv_out_extent(wid, kw, stride, pad, "conv2d");
  const std::size_t kdim = cin * kh * kw, area = ho * wo;

  std::vector<T> cols;
  detail::im2col_2d(x.data(), cin, h, wid, kh, kw, stride, pad, ho, wo, cols);
  std::vector<T> y(cout * area);
  {
    auto ym = detail::as_mat(y, cout, area);
    ym.noalias() = detail::as_mat(w.data(), cout, kdim) * detail::as_mat(cols, kdim, area);
    for (std::size_t c = 0; c < cout; ++c) ym.row(c).array() += b.data()[c];
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(
      Shape{cout, ho, wo}, std::move(y), {x, w, b},
      [xn, wn, bn, cin, h, wid, kh, kw, stride, pad, ho, wo, cout, kdim,
       area](TensorNode<T>& self) {
        auto g = detail::as_mat(self.grad, cout, area);
        std::vector<T> cols;
        detail::im2col_2d(xn->value, cin, h, wid, kh, kw, stride, pad, ho, wo, cols);
        if (wn->requires_grad) {
          wn->ensure_grad();
          detail::as_mat(wn->grad, cout, kdim).noalias() +=
              g * detail::as_mat(cols, kdim, area).transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t c = 0; c < cout; ++c) bn->grad[c] += g.row(c).sum();
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          std::vector<T> dcols(kdim * area);
          detail::as_mat(dcols, kdim, area).noalias() =
              detail::as_mat(wn->value, cout, kdim).transpose() * g;
          detail::col2im_2d(dcols, cin, h, wid, kh, kw, stride, pad, ho, wo, xn->grad);
        }
      });
}

// x: [C_in, T]; w: [C_out, C_in, k]; b: [C_out].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t stride, std::size_t pad) {
  if (x.ndim() != 2 || w.ndim() != 3)
    throw ShapeError("conv1d: expected x [C,T], w [Co,Ci,k]");
  const std::size_t cin = x.dim(0), tlen = x.dim(1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin)
    throw ShapeError("conv1d: channel mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(w.shape()));
  if (b.size() != cout) throw ShapeError("conv1d: bias size mismatch");
  const std::size_t to = detail::conv_out_extent(tlen, k, stride, pad, "conv1d");
  const std::size_t kdim = cin * k;

  std::vector<T> cols(kdim * to, T(0));
  const auto& xv = x.data();
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ki = 0; ki < k; ++ki) {
      T* dst = cols.data() + (c * k + ki) * to;
      for (std::size_t ot = 0; ot < to; ++ot) {
        const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * stride + ki) -
                                  static_cast<std::ptrdiff_t>(pad);
        if (it >= 0 && it < static_cast<std::ptrdiff_t>(tlen))
          dst[ot] = xv[c * tlen + static_cast<std::size_t>(it)];
      }
    }
  std::vector<T> y(cout * to);
  {
    auto ym = detail::as_mat(y, cout, to);
    ym.noalias() = detail::as_mat(w.data(), cout, kdim) * detail::as_mat(cols, kdim, to);
    for (std::size_t c = 0; c < cout; ++c) ym.row(c).array() += b.data()[c];
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(
      Shape{cout, to}, std::move(y), {x, w, b},
      [xn, wn, bn, cin, tlen, k, stride, pad, to, cout, kdim,
       cols = std::move(cols)](TensorNode<T>& self) {
        auto g = detail::as_mat(self.grad, cout, to);
        if (wn->requires_grad) {
          wn->ensure_grad();
          detail::as_mat(wn->grad, cout, kdim).noalias() +=
              g * detail::as_mat(cols, kdim, to).transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t c = 0; c < cout; ++c) bn->grad[c] += g.row(c).sum();
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          std::vector<T> dcols(kdim * to);
          detail::as_mat(dcols, kdim, to).noalias() =
              detail::as_mat(wn->value, cout, kdim).transpose() * g;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ki = 0; ki < k; ++ki) {
              const T* src = dcols.data() + (c * k + ki) * to;
              for (std::size_t ot = 0; ot < to; ++ot) {
                const std::ptrdiff_t it = static_cast<std::ptrdiff_t>(ot * stride + ki) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (it >= 0 && it < static_cast<std::ptrdiff_t>(tlen))
                  xn->grad[c * tlen + static_cast<std::size_t>(it)] += src[ot];
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Interpolation / sampling
// ---------------------------------------------------------------------------

// Align-corners linear resampling of the rows of [T x d] to [T' x d].
// T == 1 or T' == 1 degenerates to row replication / first-row selection.
template <typename T>
Tensor<T> interp_linear_1d(const Tensor<T>& x, std::size_t target_len) {
  if (x.ndim() != 2 || x.dim(0) == 0) throw ShapeError("interp_linear_1d: expected [T x d], T >= 1");
  if (target_len == 0) throw ShapeError("interp_linear_1d: target length must be >= 1");
  const std::size_t t_in = x.dim(0), d = x.dim(1);
  const double scale = (target_len > 1 && t_in > 1)
                           ? static_cast<double>(t_in - 1) / static_cast<double>(target_len - 1)
                           : 0.0;
  std::vector<T> y(target_len * d);
  const auto& xv = x.data();
  std::vector<std::size_t> lo(target_len);
  std::vector<T> frac(target_len);
  for (std::size_t t = 0; t < target_len; ++t) {
    const double pos = scale * static_cast<double>(t);
    std::size_t i0 = static_cast<std::size_t>(pos);
    if (i0 >= t_in - 1) i0 = t_in - 1;
    const double f = pos - static_cast<double>(i0);
    lo[t] = i0;
    frac[t] = static_cast<T>(f);
    const std::size_t i1 = std::min(i0 + 1, t_in - 1);
    for (std::size_t j = 0; j < d; ++j)
      y[t * d + j] = static_cast<T>((1.0 - f) * xv[i0 * d + j] + f * xv[i1 * d + j]);
  }
  auto xn = x.node();
  return detail::make_op<T>(Shape{target_len, d}, std::move(y), {x},
                            [xn, t_in, d, lo = std::move(lo),
                             frac = std::move(frac)](TensorNode<T>& self) {
                              xn->ensure_grad();
                              const std::size_t t_out = self.shape[0];
                              for (std::size_t t = 0; t < t_out; ++t) {
                                const std::size_t i0 = lo[t];
                                const std::size_t i1 = std::min(i0 + 1, t_in - 1);
                                const T f = frac[t];
                                for (std::size_t j = 0; j < d; ++j) {
                                  xn->grad[i0 * d + j] += (T(1) - f) * self.grad[t * d + j];
                                  xn->grad[i1 * d + j] += f * self.grad[t * d + j];
                                }
                              }
                            });
}

namespace detail {

// Shared 4-neighbor weights for a normalized point on an H x W grid
// (align-corners mapping; out-of-range neighbors dropped).
struct BilinearFootprint {
  // (row, col, weight, d_weight/d_x, d_weight/d_y) per surviving neighbor
  struct Tap {
    std::size_t iy, ix;
    double w, dwdx, dwdy;
  };
  Tap taps[4];
  int count = 0;
};

inline BilinearFootprint bilinear_footprint(double x, double y, std::size_t h,
                                            std::size_t w) {
  BilinearFootprint fp;
  const double sx = (w > 1) ? static_cast<double>(w - 1) : 0.0;
  const double sy = (h > 1) ? static_cast<double>(h - 1) : 0.0;
  const double px = x * sx, py = y * sy;
  const double fx0 = std::floor(px), fy0 = std::floor(py);
  const double ax = px - fx0, ay = py - fy0;
  const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(fx0);
  const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(fy0);
  const double wx[2] = {1.0 - ax, ax};
  const double dwx[2] = {-sx, sx};
  const double wy[2] = {1.0 - ay, ay};
  const double dwy[2] = {-sy, sy};
  for (int dy = 0; dy < 2; ++dy) {
    const std::ptrdiff_t iy = y0 + dy;
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
    for (int dx = 0; dx < 2; ++dx) {
      const std::ptrdiff_t ix = x0 + dx;
      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
      auto& tap = fp.taps[fp.count++];
      tap.iy = static_cast<std::size_t>(iy);
      tap.ix = static_cast<std::size_t>(ix);
      tap.w = wx[dx] * wy[dy];
      tap.dwdx = dwx[dx] * wy[dy];
      tap.dwdy = wx[dx] * dwy[dy];
    }
  }
  return fp;
}

}  // namespace detail

// map: [d, H, W]; point: [2] = (x, y) in normalized [0,1]^2 coordinates.
// Differentiable in both; out-of-range neighbors contribute zero.
template <typename T>
Tensor<T> bilinear_sample(const Tensor<T>& map, const Tensor<T>& point) {
  if (map.ndim() != 3) throw ShapeError("bilinear_sample: map must be [d,H,W]");
  if (point.size() != 2) throw ShapeError("bilinear_sample: point must have 2 entries");
  const std::size_t d = map.dim(0), h = map.dim(1), w = map.dim(2);
  const double px = static_cast<double>(point.data()[0]);
  const double py = static_cast<double>(point.data()[1]);
  const auto fp = detail::bilinear_footprint(px, py, h, w);
  std::vector<T> y(d, T(0));
  const auto& mv = map.data();
  for (int t = 0; t < fp.count; ++t) {
    const auto& tap = fp.taps[t];
    for (std::size_t c = 0; c < d; ++c)
      y[c] += static_cast<T>(tap.w) * mv[(c * h + tap.iy) * w + tap.ix];
  }
  auto mn = map.node(), pn = point.node();
  return detail::make_op<T>(Shape{d}, std::move(y), {map, point},
                            [mn, pn, fp, d, h, w](TensorNode<T>& self) {
                              if (mn->requires_grad) {
                                mn->ensure_grad();
                                for (int t = 0; t < fp.count; ++t) {
                                  const auto& tap = fp.taps[t];
                                  for (std::size_t c = 0; c < d; ++c)
                                    mn->grad[(c * h + tap.iy) * w + tap.ix] +=
                                        static_cast<T>(tap.w) * self.grad[c];
                                }
                              }
                              if (pn->requires_grad) {
                                pn->ensure_grad();
                                double gx = 0, gy = 0;
                                for (int t = 0; t < fp.count; ++t) {
                                  const auto& tap = fp.taps[t];
                                  for (std::size_t c = 0; c < d; ++c) {
                                    const double mg = static_cast<double>(
                                        mn->value[(c * h + tap.iy) * w + tap.ix]);
                                    const double sg = static_cast<double>(self.grad[c]);
                                    gx += sg * tap.dwdx * mg;
                                    gy += sg * tap.dwdy * mg;
                                  }
                                }
                                pn->grad[0] += static_cast<T>(gx);
                                pn->grad[1] += static_cast<T>(gy);
                              }
                            });
}

// ---------------------------------------------------------------------------
// Normalization / regularization
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  const std::size_t c = x.dim(x.ndim() - 1);
  if (gain.size() != c || bias.size() != c)
    throw ShapeError("layer_norm: gain/bias must match last dim " + std::to_string(c));
  const std::size_t rows = x.size() / c;
  std::vector<T> y(x.size()), xhat(x.size()), inv_std(rows);
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += xv[r * c + j];
    mean /= static_cast<T>(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const T d = xv[r * c + j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (xv[r * c + j] - mean) * inv;
      y[r * c + j] = xhat[r * c + j] * gv[j] + bv[j];
    }
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return detail::make_op<T>(
      x.shape(), std::move(y), {x, gain, bias},
      [xn, gn, bn, rows, c, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](TensorNode<T>& self) {
        for (std::size_t r = 0; r < rows; ++r) {
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (std::size_t j = 0; j < c; ++j)
              gn->grad[j] += self.grad[r * c + j] * xhat[r * c + j];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t j = 0; j < c; ++j) bn->grad[j] += self.grad[r * c + j];
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            T mean_dxhat = 0, mean_dxhat_xhat = 0;
            for (std::size_t j = 0; j < c; ++j) {
              const T dxhat = self.grad[r * c + j] * gn->value[j];
              mean_dxhat += dxhat;
              mean_dxhat_xhat += dxhat * xhat[r * c + j];
            }
            mean_dxhat /= static_cast<T>(c);
            mean_dxhat_xhat /= static_cast<T>(c);
            for (std::size_t j = 0; j < c; ++j) {
              const T dxhat = self.grad[r * c + j] * gn->value[j];
              xn->grad[r * c + j] += inv_std[r] * (dxhat - mean_dxhat -
                                                   xhat[r * c + j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

enum class DropoutMode { kTrain, kEval };

// Inverted dropout: kept entries scaled by 1/(1-rate) so eval is identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, DropoutMode mode, RngState& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (mode == DropoutMode::kEval || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = (rng.uniform() >= rate) ? keep_scale : T(0);
  std::vector<T> y(x.size());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(y), {x},
                            [xn, mask = std::move(mask)](TensorNode<T>& self) {
                              xn->ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[i] += self.grad[i] * mask[i];
                            });
}

}  // namespace wavefuse
