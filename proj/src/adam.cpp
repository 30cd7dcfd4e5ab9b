#include "mse2d/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mse2d {

template <class S>
AdamState<S> make_adam_state(const std::vector<ad::Var<S>>& params) {
  AdamState<S> state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& p : params) {
    state.m.emplace_back(p.value().dims, std::vector<S>(p.value().numel(), S(0)));
    state.v.emplace_back(p.value().dims, std::vector<S>(p.value().numel(), S(0)));
  }
  return state;
}

template <class S>
void adam_step(std::vector<ad::Var<S>>& params, const std::vector<Tensor<S>>& grads,
               AdamState<S>& state, const AdamHyper& hyper) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: params/grads/state size mismatch");
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_dims(params[i].value())) {
      throw std::invalid_argument("adam_step: grad dims mismatch at tensor " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw std::runtime_error("adam_step: non-finite gradient at tensor " + std::to_string(i) +
                               "; aborting step");
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].mutable_value();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (size_t j = 0; j < value.data.size(); ++j) {
      const double gj = static_cast<double>(g.data[j]);
      const double mj = hyper.beta1 * static_cast<double>(m.data[j]) + (1.0 - hyper.beta1) * gj;
      const double vj = hyper.beta2 * static_cast<double>(v.data[j]) + (1.0 - hyper.beta2) * gj * gj;
      m.data[j] = static_cast<S>(mj);
      v.data[j] = static_cast<S>(vj);
      const double m_hat = mj / bc1;
      const double v_hat = vj / bc2;
      value.data[j] = static_cast<S>(static_cast<double>(value.data[j]) -
                                     hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps));
    }
  }
}

template AdamState<float> make_adam_state<float>(const std::vector<ad::Var<float>>&);
template AdamState<double> make_adam_state<double>(const std::vector<ad::Var<double>>&);
template void adam_step<float>(std::vector<ad::Var<float>>&, const std::vector<Tensor<float>>&,
                               AdamState<float>&, const AdamHyper&);
template void adam_step<double>(std::vector<ad::Var<double>>&, const std::vector<Tensor<double>>&,
                                AdamState<double>&, const AdamHyper&);

}  // namespace mse2d
