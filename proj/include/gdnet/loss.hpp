#pragma once

#include "gdnet/ops.hpp"

namespace gdnet {

struct LossConfig {
  double lambda = 0.85;  // variance-focus weight, 0..1
  double alpha = 10.0;   // scale

  void validate() const {
    if (lambda < 0.0 || lambda > 1.0) fail("LossConfig", "lambda must be in [0,1]");
    if (!(alpha > 0.0)) fail("LossConfig", "alpha must be positive");
  }
};

/// Scale-invariant log loss:
///   G_i  = log(pred_i) − log(gt_i)
///   L    = α · sqrt( mean(G²) − (λ/n²)(ΣG)² )
/// The radicand is clamped at zero and shifted by ε=1e-12 before the sqrt
/// so the gradient stays finite at the perfect-prediction point; the
/// constant α·sqrt(ε) is subtracted so perfect predictions score exactly 0.
template <typename T>
Tensor<T> silog_loss(const Tensor<T>& pred, const Tensor<T>& gt,
                     const LossConfig& cfg = {}) {
  cfg.validate();
  if (pred.shape() != gt.shape())
    fail("silog_loss", "shape mismatch: " + shape_str(pred.shape()) + " vs " +
                           shape_str(gt.shape()));
  for (T v : pred.data())
    if (!(v > T(0))) fail("silog_loss", "prediction must be strictly positive");
  for (T v : gt.data())
    if (!(v > T(0))) fail("silog_loss", "ground truth must be strictly positive");

  const T n = T(pred.size());
  Tensor<T> g = sub(log(pred), log(gt));
  Tensor<T> mean_sq = mean(mul(g, g));
  Tensor<T> s = sum(g);
  Tensor<T> radicand =
      sub(mean_sq, scalar_mul(mul(s, s), T(cfg.lambda) / (n * n)));
  constexpr T eps = T(1e-12);
  Tensor<T> root = sqrt(scalar_add(relu(radicand), eps));
  return scalar_mul(scalar_add(root, -std::sqrt(eps)), T(cfg.alpha));
}

/// L1 and MSE alternatives for the loss-ablation axis.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) fail("l1_loss", "shape mismatch");
  return mean(abs(sub(pred, gt)));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) fail("mse_loss", "shape mismatch");
  Tensor<T> d = sub(pred, gt);
  return mean(mul(d, d));
}

// ---- evaluation metrics (plain functions, meters) ----

inline double mae(const std::vector<float>& pred, const std::vector<float>& gt) {
  if (pred.size() != gt.size()) fail("mae", "shape mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(double(pred[i]) - double(gt[i]));
  return acc / double(pred.size());
}

inline double rmse(const std::vector<float>& pred, const std::vector<float>& gt) {
  if (pred.size() != gt.size()) fail("rmse", "shape mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = double(pred[i]) - double(gt[i]);
    acc += e * e;
  }
  return std::sqrt(acc / double(pred.size()));
}

/// Scalar SILog value on raw rasters (no autodiff), for evaluation CSVs.
inline double silog_metric(const std::vector<float>& pred, const std::vector<float>& gt,
                           const LossConfig& cfg = {}) {
  if (pred.size() != gt.size()) fail("silog_metric", "shape mismatch");
  const double n = double(pred.size());
  double sum_g = 0, sum_g2 = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = std::log(double(pred[i])) - std::log(double(gt[i]));
    sum_g += g;
    sum_g2 += g * g;
  }
  const double radicand = sum_g2 / n - cfg.lambda / (n * n) * sum_g * sum_g;
  constexpr double eps = 1e-12;
  return cfg.alpha * (std::sqrt(std::max(radicand, 0.0) + eps) - std::sqrt(eps));
}

}  // namespace gdnet
