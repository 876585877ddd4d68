#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "facechannel/tensor.hpp"

namespace facechannel {

namespace detail {

template <typename T>
void check_stochastic_rows(const char* which, const Tensor<T>& t) {
  const std::size_t n = t.dim(0), k = t.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    T sum = T(0);
    for (std::size_t j = 0; j < k; ++j) sum += t[i * k + j];
    if (std::abs(double(sum) - 1.0) > 1e-4)
      throw std::invalid_argument(std::string("soft_cross_entropy: ") + which + " row " +
                                  std::to_string(i) + " sums to " + std::to_string(double(sum)) +
                                  ", not 1");
  }
}

template <typename T>
void check_same_2d(const char* op, const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.rank() != 2 || !pred.same_shape(target))
    throw std::invalid_argument(std::string(op) + ": shapes disagree: " +
                                shape_to_string(pred.shape()) + " vs " +
                                shape_to_string(target.shape()));
}

} // namespace detail

inline constexpr double kProbFloor = 1e-12;

/// Mean over the batch of −Σ_k target·log(pred), with pred clamped to
/// [1e-12, 1] before the log. Targets may be any distribution (soft labels);
/// one-hot targets reduce this to ordinary cross-entropy. Both arguments
/// must be row-stochastic within 1e-4.
template <typename T>
double soft_cross_entropy(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_2d("soft_cross_entropy", pred, target);
  detail::check_stochastic_rows("pred", pred);
  detail::check_stochastic_rows("target", target);
  const std::size_t n = pred.dim(0), k = pred.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::min(std::max(double(pred[i * k + j]), kProbFloor), 1.0);
      total -= double(target[i * k + j]) * std::log(p);
    }
  return total / static_cast<double>(n);
}

/// d(soft_cross_entropy)/d(pred): −target / clamp(pred) / N, zero where the
/// clamp is active. Feeding this through a softmax backward yields the usual
/// (probs − target)/N.
template <typename T>
Tensor<T> soft_cross_entropy_grad(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_2d("soft_cross_entropy", pred, target);
  const std::size_t n = pred.dim(0);
  Tensor<T> grad(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = double(pred[i]);
    if (p > kProbFloor && p < 1.0 + 1e-15)
      grad[i] = static_cast<T>(-double(target[i]) / p / static_cast<double>(n));
    else if (p <= kProbFloor)
      grad[i] = T(0);
    else
      grad[i] = static_cast<T>(-double(target[i]) / static_cast<double>(n));
  }
  return grad;
}

/// Mean squared error over all elements.
template <typename T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_2d("mse_loss", pred, target);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = double(pred[i]) - double(target[i]);
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

template <typename T>
Tensor<T> mse_loss_grad(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_2d("mse_loss", pred, target);
  Tensor<T> grad(pred.shape());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    grad[i] = static_cast<T>(scale * (double(pred[i]) - double(target[i])));
  return grad;
}

/// 1 − mean over output columns of the concordance correlation between the
/// prediction column and the target column. Needs a batch of at least 2.
/// Lower is better; 0 means perfect concordance on every column.
template <typename T>
double ccc_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_2d("ccc_loss", pred, target);
  const std::size_t n = pred.dim(0), k = pred.dim(1);
  if (n < 2)
    throw std::invalid_argument("ccc_loss: needs a batch of at least 2, got " + std::to_string(n));
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += double(pred[i * k + j]);
      my += double(target[i * k + j]);
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cov = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = double(pred[i * k + j]) - mx;
      const double dy = double(target[i * k + j]) - my;
      vx += dx * dx;
      vy += dy * dy;
      cov += dx * dy;
    }
    vx /= n;
    vy /= n;
    cov /= n;
    const double dm = mx - my;
    const double denom = vx + vy + dm * dm;
    total += denom == 0.0 ? 1.0 : 2.0 * cov / denom;
  }
  return 1.0 - total / static_cast<double>(k);
}

template <typename T>
Tensor<T> ccc_loss_grad(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_same_2d("ccc_loss", pred, target);
  const std::size_t n = pred.dim(0), k = pred.dim(1);
  if (n < 2)
    throw std::invalid_argument("ccc_loss: needs a batch of at least 2, got " + std::to_string(n));
  Tensor<T> grad(pred.shape());
  for (std::size_t j = 0; j < k; ++j) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += double(pred[i * k + j]);
      my += double(target[i * k + j]);
    }
    mx /= n;
    my /= n;
    double vx = 0, vy = 0, cov = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = double(pred[i * k + j]) - mx;
      const double dy = double(target[i * k + j]) - my;
      vx += dx * dx;
      vy += dy * dy;
      cov += dx * dy;
    }
    vx /= n;
    vy /= n;
    cov /= n;
    const double dm = mx - my;
    const double denom = vx + vy + dm * dm;
    if (denom == 0.0) continue; // constant columns contribute no gradient
    const double num = 2.0 * cov;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = double(pred[i * k + j]) - mx;
      const double dy = double(target[i * k + j]) - my;
      // d num / d pred_ij and d denom / d pred_ij with population moments
      const double dnum = 2.0 * dy / n;
      const double ddenom = 2.0 * dx / n + 2.0 * dm / n;
      const double dccc = (dnum * denom - num * ddenom) / (denom * denom);
      grad[i * k + j] = static_cast<T>(-dccc / static_cast<double>(k));
    }
  }
  return grad;
}

} // namespace facechannel
