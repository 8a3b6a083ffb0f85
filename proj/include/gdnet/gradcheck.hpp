#pragma once

#include <functional>

#include "gdnet/ops.hpp"

namespace gdnet {

struct GradcheckFailure {
  std::size_t input;       // which argument
  std::size_t coordinate;  // flat index within it
  double analytic;
  double numeric;
  double rel_err;
};

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::vector<GradcheckFailure> failures;
  bool pass = true;
};

/// Compares reverse-mode gradients of a scalar-valued f against central
/// finite differences, coordinate by coordinate, in 64-bit precision.
/// Relative error uses |a|+|n| as denominator with an absolute floor so
/// near-zero gradients are compared absolutely.
inline GradcheckReport gradcheck(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
    const std::vector<Tensor<double>>& inputs, double h = 1e-6,
    double tol = 1e-4) {
  // analytic pass on requires_grad copies
  std::vector<Tensor<double>> live;
  live.reserve(inputs.size());
  for (const auto& x : inputs)
    live.push_back(Tensor<double>::from_data(x.shape(), x.data(), true));
  Tensor<double> y = f(live);
  if (y.size() != 1)
    fail("gradcheck", "function output must be scalar, got shape " + shape_str(y.shape()));
  backward(y);

  GradcheckReport report;
  for (std::size_t ai = 0; ai < inputs.size(); ++ai) {
    std::vector<double> analytic(live[ai].size(), 0.0);
    if (live[ai].has_grad()) analytic = live[ai].grad();
    for (std::size_t i = 0; i < inputs[ai].size(); ++i) {
      std::vector<Tensor<double>> probe;
      for (const auto& x : inputs)
        probe.push_back(Tensor<double>::from_data(x.shape(), x.data(), false));
      probe[ai].data()[i] += h;
      const double fp = f(probe).item();
      probe[ai].data()[i] -= 2 * h;
      const double fm = f(probe).item();
      const double numeric = (fp - fm) / (2 * h);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-3);
      report.max_rel_err = std::max(report.max_rel_err, rel);
      if (rel >= tol) {
        report.pass = false;
        report.failures.push_back({ai, i, a, numeric, rel});
      }
    }
  }
  return report;
}

/// Single-input convenience overload.
inline GradcheckReport gradcheck(
    const std::function<Tensor<double>(const Tensor<double>&)>& f,
    const Tensor<double>& x, double h = 1e-6, double tol = 1e-4) {
  return gradcheck(
      [&](const std::vector<Tensor<double>>& xs) { return f(xs[0]); },
      std::vector<Tensor<double>>{x}, h, tol);
}

}  // namespace gdnet
