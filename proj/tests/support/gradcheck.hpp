#pragma once

// Central finite-difference oracle for reverse-mode gradients. Lives in test
// code only and shares nothing with the backward closures it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hsd/autograd.hpp"

namespace hsd::testing {

struct GradCheckResult {
  std::string worst_name;
  double worst_error = 0.0;
};

/// Norm-wise relative error between analytic and numeric gradients, per
/// parameter tensor:  |a - n| / max(|a|, |n|, floor).
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                             double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

inline std::vector<double> numeric_gradient(Var<double>& param, const std::function<Var<double>()>& loss_fn,
                                            double eps = 1e-3) {
  auto values = param.mutable_value().data();
  std::vector<double> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double saved = values[k];
    values[k] = saved + eps;
    const double up = loss_fn().value().item();
    values[k] = saved - eps;
    const double down = loss_fn().value().item();
    values[k] = saved;
    out[k] = (up - down) / (2.0 * eps);
  }
  return out;
}

/// Checks every named parameter; returns the worst tensor.
inline GradCheckResult check_gradients(std::vector<std::pair<std::string, Var<double>>> params,
                                       const std::function<Var<double>()>& loss_fn, double eps = 1e-3) {
  const auto grads = backward(loss_fn());
  GradCheckResult result;
  for (auto& [name, p] : params) {
    const auto& a = grads[p];
    std::vector<double> analytic(a.data().begin(), a.data().end());
    const auto numeric = numeric_gradient(p, loss_fn, eps);
    const double err = relative_error(analytic, numeric);
    if (err >= result.worst_error) {
      result.worst_error = err;
      result.worst_name = name;
    }
  }
  return result;
}

}  // namespace hsd::testing
