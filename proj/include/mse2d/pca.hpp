#pragma once

#include "mse2d/tensor.hpp"

namespace mse2d {

// Batch PCA basis: column means plus top-k right singular vectors of the
// centered data, columns orthonormal and ordered by descending explained
// variance. Sign is fixed so each column's largest-magnitude entry is
// positive, making fits deterministic.
template <class S>
struct PcaBasis {
  Tensor<S> mean;        // 1 x d
  Tensor<S> components;  // d x k
};

template <class S>
PcaBasis<S> pca_fit(const Tensor<S>& batch, int k);

// (x - mean) * components
template <class S>
Tensor<S> pca_project(const Tensor<S>& x, const PcaBasis<S>& basis);

}  // namespace mse2d
