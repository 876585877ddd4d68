#pragma once

#include <string>
#include <vector>

#include "facechannel/gradcheck.hpp"
#include "facechannel/layers.hpp"
#include "facechannel/losses.hpp"

namespace facechannel {

struct LayerSuiteEntry {
  std::string layer;
  GradCheckReport report;
};

/// The documented finite-difference suite over every layer type, in f64.
/// Tolerances: 1e-4 for shunting and batch norm (longer chains of
/// intermediate arithmetic), 1e-5 for everything else. Batch norm and the
/// softmax+cross-entropy composite use a weighted readout because their
/// output sums are input-independent, which would make a plain sum-loss
/// check vacuous.
inline std::vector<LayerSuiteEntry> run_layer_suite(std::uint64_t seed) {
  std::vector<LayerSuiteEntry> results;
  Rng data_rng(seed);
  auto random_tensor = [&data_rng](const Shape& shape, double lo, double hi) {
    Tensor<double> t(shape);
    for (auto& v : t.values()) v = data_rng.uniform(lo, hi);
    return t;
  };
  GradCheckOptions tight;
  tight.seed = seed ^ 0x517cc1b7u;
  tight.tolerance = 1e-5;
  GradCheckOptions relaxed = tight;
  relaxed.tolerance = 1e-4;

  {
    Rng init(seed);
    Conv2d<double> conv(3, 4, 3, 3, 1, 1, init);
    results.push_back({"conv2d", grad_check(conv, random_tensor({2, 3, 8, 8}, -1, 1), tight)});
  }
  {
    MaxPool2d<double> pool;
    results.push_back({"maxpool2d", grad_check(pool, random_tensor({1, 2, 6, 6}, -1, 1), tight)});
  }
  {
    BatchNorm2d<double> bn(3);
    results.push_back(
        {"batchnorm2d",
         grad_check(bn, random_tensor({2, 3, 4, 4}, -1, 1), relaxed, weighted_sum_loss(seed))});
  }
  {
    Dropout<double> dropout(0.5);
    results.push_back({"dropout", grad_check(dropout, random_tensor({4, 10}, -1, 1), tight)});
  }
  {
    Rng init(seed + 1);
    Dense<double> dense(6, 5, init);
    results.push_back({"dense", grad_check(dense, random_tensor({4, 6}, -1, 1), tight)});
  }
  {
    Rng init(seed + 2);
    ShuntingInhibition<double> shunting(4, 3, 3, init);
    results.push_back(
        {"shunting", grad_check(shunting, random_tensor({1, 4, 8, 8}, -1, 1), relaxed)});
  }
  {
    // softmax + cross-entropy composite: check the softmax input gradient of
    // CE(softmax(x), target) for a fixed random target distribution.
    Softmax<double> softmax;
    const std::size_t n = 3, k = 5;
    Tensor<double> target({n, k});
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < k; ++j) {
        target[i * k + j] = data_rng.uniform(0.05, 1.0);
        sum += target[i * k + j];
      }
      for (std::size_t j = 0; j < k; ++j) target[i * k + j] /= sum;
    }
    GradCheckLoss ce_loss{
        [target](const Tensor<double>& probs) { return soft_cross_entropy(probs, target); },
        [target](const Tensor<double>& probs) { return soft_cross_entropy_grad(probs, target); },
    };
    results.push_back(
        {"softmax_cross_entropy", grad_check(softmax, random_tensor({n, k}, -2, 2), tight, ce_loss)});
  }
  return results;
}

} // namespace facechannel
