#pragma once

#include <cstdint>
#include <vector>

#include "mse2d/graph.hpp"

namespace mse2d {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class S>
struct AdamState {
  std::vector<Tensor<S>> m;
  std::vector<Tensor<S>> v;
  int64_t t = 0;
};

template <class S>
AdamState<S> make_adam_state(const std::vector<ad::Var<S>>& params);

// Standard bias-corrected Adam update, in place. Throws (naming the tensor
// index) on a non-finite gradient so a bad step never lands in the params.
template <class S>
void adam_step(std::vector<ad::Var<S>>& params, const std::vector<Tensor<S>>& grads,
               AdamState<S>& state, const AdamHyper& hyper);

}  // namespace mse2d
