#pragma once

#include <vector>

#include "wavefuse/tensor.hpp"

namespace wavefuse {

// L multi-scale feature maps sharing a channel width, plus their
// downsampling strides. Fusion preserves every level's extents, so the
// same type serves both the raw and the fused pyramid.
template <typename T>
struct FeaturePyramid {
  std::vector<Tensor<T>> levels;       // each [d x H_l x W_l]
  std::vector<std::size_t> strides;    // strictly increasing
  std::size_t d = 0;

  std::size_t level_count() const { return levels.size(); }

  void validate() const {
    if (levels.empty() || levels.size() != strides.size())
      throw ShapeError("pyramid: levels/strides size mismatch");
    for (std::size_t l = 0; l < levels.size(); ++l) {
      if (levels[l].ndim() != 3 || levels[l].dim(0) != d)
        throw ShapeError("pyramid: level " + std::to_string(l) + " has shape " +
                         shape_str(levels[l].shape()) + ", expected channel width " +
                         std::to_string(d));
      if (levels[l].dim(1) == 0 || levels[l].dim(2) == 0)
        throw ShapeError("pyramid: empty level " + std::to_string(l));
      if (l > 0 && strides[l] <= strides[l - 1])
        throw ShapeError("pyramid: strides must be strictly increasing");
    }
  }
};

template <typename T>
using FusedPyramid = FeaturePyramid<T>;

}  // namespace wavefuse
