#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "hsd/autograd.hpp"

namespace hsd {

/// Adam with bias correction. Moments are created lazily on the first step
/// and stay aligned with the parameter order passed to adam_step.
template <std::floating_point T>
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  AdamState() = default;
  explicit AdamState(double lr) : learning_rate(lr) {}
};

template <std::floating_point T>
void adam_step(AdamState<T>& state, std::span<Var<T>> params, std::span<const Tensor<T>> grads) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw DimensionError("adam_step: gradient " + shape_str(grads[i].shape()) + " for parameter " +
                           shape_str(params[i].shape()));
    }
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  } else if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: parameter list changed between steps");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].mutable_value().data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double gk = g[k];
      const double mk = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
      const double vk = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = state.learning_rate * (mk / correction1) / (std::sqrt(vk / correction2) + state.epsilon);
      value[k] = static_cast<T>(value[k] - update);
    }
  }
}

template <std::floating_point T>
void adam_step(AdamState<T>& state, std::span<Var<T>> params, const Gradients<T>& grads) {
  std::vector<Tensor<T>> g;
  g.reserve(params.size());
  for (const auto& p : params) g.push_back(grads[p]);
  adam_step(state, params, std::span<const Tensor<T>>(g));
}

}  // namespace hsd
