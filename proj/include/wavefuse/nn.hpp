#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "wavefuse/ops.hpp"
#include "wavefuse/rng.hpp"
#include "wavefuse/tensor.hpp"

namespace wavefuse {

// Learning-rate group; the backbone group covers the visual conv stack and
// the audio conv encoder, everything else is head.
enum class ParamGroup { kBackbone, kHead };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  ParamGroup group = ParamGroup::kHead;
};

// Ordered, name-unique registry of trainable tensors. Registration order is
// fixed by model construction, which pins both initialization draws and the
// optimizer state layout.
template <typename T>
class ParameterStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape, ParamGroup group,
                const std::function<T()>& init) {
    if (index_.count(name)) throw StateError("duplicate parameter name: " + name);
    std::vector<T> data(numel(shape));
    for (auto& v : data) v = init();
    Tensor<T> t(std::move(shape), std::move(data), /*requires_grad=*/true);
    index_[name] = params_.size();
    params_.push_back(Parameter<T>{name, t, group});
    return t;
  }

  Tensor<T> add_zeros(const std::string& name, Shape shape, ParamGroup group) {
    return add(name, std::move(shape), group, [] { return T(0); });
  }

  Tensor<T> add_const(const std::string& name, Shape shape, ParamGroup group, T v) {
    return add(name, std::move(shape), group, [v] { return v; });
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& at(std::size_t i) { return params_[i]; }
  const Parameter<T>& at(std::size_t i) const { return params_[i]; }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  // Copies values from another store where names and shapes agree.
  // Returns the number of parameters copied.
  std::size_t copy_matching_from(const ParameterStore<T>& other) {
    std::size_t n = 0;
    for (auto& p : params_) {
      const Parameter<T>* src = other.find(p.name);
      if (src && src->value.shape() == p.value.shape()) {
        p.value.mutable_data() = src->value.data();
        ++n;
      }
    }
    return n;
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace init {

template <typename T>
std::function<T()> glorot_uniform(RngState& rng, std::size_t fan_in, std::size_t fan_out) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return [&rng, a] { return static_cast<T>(rng.uniform(-a, a)); };
}

template <typename T>
std::function<T()> normal(RngState& rng, double stddev) {
  return [&rng, stddev] { return static_cast<T>(rng.normal(0.0, stddev)); };
}

}  // namespace init

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
struct LinearLayer {
  Tensor<T> w, b;

  LinearLayer() = default;
  LinearLayer(ParameterStore<T>& ps, const std::string& name, std::size_t in,
              std::size_t out, RngState& rng, ParamGroup g = ParamGroup::kHead) {
    w = ps.add(name + ".weight", {out, in}, g, init::glorot_uniform<T>(rng, in, out));
    b = ps.add_zeros(name + ".bias", {out}, g);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  std::size_t stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParameterStore<T>& ps, const std::string& name, std::size_t cin,
              std::size_t cout, std::size_t k, std::size_t stride_, std::size_t pad_,
              RngState& rng, ParamGroup g = ParamGroup::kBackbone)
      : stride(stride_), pad(pad_) {
    w = ps.add(name + ".weight", {cout, cin, k, k}, g,
               init::glorot_uniform<T>(rng, cin * k * k, cout * k * k));
    b = ps.add_zeros(name + ".bias", {cout}, g);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct Conv1dLayer {
  Tensor<T> w, b;
  std::size_t stride = 1, pad = 0;

  Conv1dLayer() = default;
  Conv1dLayer(ParameterStore<T>& ps, const std::string& name, std::size_t cin,
              std::size_t cout, std::size_t k, std::size_t stride_, std::size_t pad_,
              RngState& rng, ParamGroup g = ParamGroup::kBackbone)
      : stride(stride_), pad(pad_) {
    w = ps.add(name + ".weight", {cout, cin, k}, g,
               init::glorot_uniform<T>(rng, cin * k, cout * k));
    b = ps.add_zeros(name + ".bias", {cout}, g);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv1d(x, w, b, stride, pad); }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gain, bias;

  LayerNormLayer() = default;
  LayerNormLayer(ParameterStore<T>& ps, const std::string& name, std::size_t dim,
                 ParamGroup g = ParamGroup::kHead) {
    gain = ps.add_const(name + ".gain", {dim}, g, T(1));
    bias = ps.add_zeros(name + ".bias", {dim}, g);
  }

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

// Feed-forward stack with ReLU between layers (none after the last).
template <typename T>
struct MlpLayer {
  std::vector<LinearLayer<T>> layers;

  MlpLayer() = default;
  MlpLayer(ParameterStore<T>& ps, const std::string& name,
           const std::vector<std::size_t>& dims, RngState& rng,
           ParamGroup g = ParamGroup::kHead) {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(ps, name + ".fc" + std::to_string(i), dims[i], dims[i + 1], rng, g);
  }

  Tensor<T> forward(Tensor<T> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(x);
      if (i + 1 < layers.size()) x = relu(x);
    }
    return x;
  }
};

// Standard multi-head scaled dot-product attention. Queries and keys/values
// may have different source dims; all are projected to `dim`.
template <typename T>
struct MultiHeadAttention {
  LinearLayer<T> wq, wk, wv, wo;
  std::size_t dim = 0, heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& ps, const std::string& name, std::size_t dim_,
                     std::size_t kv_dim, std::size_t heads_, RngState& rng,
                     ParamGroup g = ParamGroup::kHead)
      : dim(dim_), heads(heads_) {
    if (heads == 0 || dim % heads != 0)
      throw ConfigError("attention heads (" + std::to_string(heads_) +
                        ") must divide model dim (" + std::to_string(dim_) + ")");
    wq = LinearLayer<T>(ps, name + ".q", dim, dim, rng, g);
    wk = LinearLayer<T>(ps, name + ".k", kv_dim, dim, rng, g);
    wv = LinearLayer<T>(ps, name + ".v", kv_dim, dim, rng, g);
    wo = LinearLayer<T>(ps, name + ".out", dim, dim, rng, g);
  }

  Tensor<T> forward(const Tensor<T>& queries, const Tensor<T>& keys_values) const {
    const std::size_t dh = dim / heads;
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor<T> q = wq.forward(queries);
    Tensor<T> k = wk.forward(keys_values);
    Tensor<T> v = wv.forward(keys_values);
    Tensor<T> merged;
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor<T> qh = slice_lastdim(q, h * dh, (h + 1) * dh);
      Tensor<T> kh = slice_lastdim(k, h * dh, (h + 1) * dh);
      Tensor<T> vh = slice_lastdim(v, h * dh, (h + 1) * dh);
      Tensor<T> scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);
      Tensor<T> attn = softmax_lastdim(scores);
      Tensor<T> out_h = matmul(attn, vh);
      merged = h == 0 ? out_h : concat_lastdim(merged, out_h);
    }
    return wo.forward(merged);
  }
};

}  // namespace wavefuse
