#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mse2d/graph.hpp"

namespace mse2d {

// Central-difference verification of reverse-mode gradients. `build` must be
// a pure function of the leaf values: it receives the leaves (already bound
// to the current point) and returns the scalar root. Anything stochastic or
// gradient-blocked inside the objective has to be frozen by the caller so
// that every evaluation sees the same function.
//
// Returns max over all coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
template <class S = double>
S gradcheck(const std::function<ad::Var<S>(const std::vector<ad::Var<S>>&)>& build,
            const std::vector<Tensor<S>>& point, S eps = S(1e-5)) {
  std::vector<ad::Var<S>> leaves;
  leaves.reserve(point.size());
  for (const auto& t : point) leaves.push_back(ad::Var<S>::parameter(t));

  ad::Var<S> root = build(leaves);
  ad::forward_eval(root);
  ad::backward(root);

  std::vector<Tensor<S>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    analytic.push_back(leaf.grad());
    if (!analytic.back().all_finite()) {
      throw std::runtime_error("gradcheck: non-finite analytic gradient");
    }
  }

  S max_rel_err = S(0);
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    for (size_t j = 0; j < point[li].numel(); ++j) {
      const S orig = leaf.mutable_value().data[j];
      leaf.mutable_value().data[j] = orig + eps;
      const S f_plus = build(leaves).value().scalar_value();
      leaf.mutable_value().data[j] = orig - eps;
      const S f_minus = build(leaves).value().scalar_value();
      leaf.mutable_value().data[j] = orig;
      const S numeric = (f_plus - f_minus) / (S(2) * eps);
      if (!std::isfinite(static_cast<double>(numeric))) {
        throw std::runtime_error("gradcheck: non-finite numeric gradient");
      }
      const S a = analytic[li].data[j];
      const S denom = std::max(S(1), std::max(std::abs(a), std::abs(numeric)));
      max_rel_err = std::max(max_rel_err, std::abs(a - numeric) / denom);
    }
  }
  return max_rel_err;
}

}  // namespace mse2d
