#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "facechannel/layers.hpp"
#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

struct GradCheckEntry {
  std::string tensor;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0; // coordinates excluded as non-differentiable (e.g. pooling ties)
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  double max_rel_err = 0.0;
  bool passed = false;

  std::string to_string() const {
    std::ostringstream os;
    for (const auto& e : entries) {
      os << "  " << e.tensor << ": max rel err " << e.max_rel_err << " over " << e.checked
         << " coords";
      if (e.skipped) os << ", " << e.skipped << " skipped at ties";
      os << "\n";
    }
    os << (passed ? "PASS" : "FAIL") << " (max rel err " << max_rel_err << ", tolerance "
       << tolerance << ")";
    return os.str();
  }
};

struct GradCheckOptions {
  double eps = 1e-6; // central-difference step, must lie in [1e-7, 1e-4]
  double tolerance = 1e-5;
  Mode mode = Mode::train;
  std::uint64_t seed = 0x9d2c5680;
  std::size_t max_coords_per_tensor = 0; // 0 = check every coordinate
};

/// Scalar readout applied to the layer output to form the checked loss.
struct GradCheckLoss {
  std::function<double(const Tensor<double>&)> value;
  std::function<Tensor<double>(const Tensor<double>&)> grad;
};

/// L = sum of outputs (the default readout).
inline GradCheckLoss sum_loss() {
  return {
      [](const Tensor<double>& out) {
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i];
        return s;
      },
      [](const Tensor<double>& out) { return Tensor<double>::ones(out.shape()); },
  };
}

/// L = sum of w ⊙ outputs with a fixed random w. A sum readout is blind to
/// layers whose output sum is input-independent (batch norm, softmax), so
/// those are checked against this weighted variant instead.
inline GradCheckLoss weighted_sum_loss(std::uint64_t seed = 0xabcd1234) {
  auto weights = [seed](const Tensor<double>& out) {
    Rng r(seed);
    Tensor<double> w(out.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = r.uniform(-1.0, 1.0);
    return w;
  };
  return {
      [weights](const Tensor<double>& out) {
        const Tensor<double> w = weights(out);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
        return s;
      },
      weights,
  };
}

namespace detail {

inline std::vector<std::size_t> pick_coords(std::size_t total, std::size_t want, Rng& rng) {
  if (want == 0 || want >= total) {
    std::vector<std::size_t> all(total);
    for (std::size_t i = 0; i < total; ++i) all[i] = i;
    return all;
  }
  std::unordered_set<std::size_t> seen;
  std::vector<std::size_t> out;
  out.reserve(want);
  while (out.size() < want) {
    const std::size_t i = rng.uniform_index(total);
    if (seen.insert(i).second) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline double rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
}

} // namespace detail

/// Central finite differences of a scalar loss versus the layer's analytic
/// gradients, for the input and every parameter, in f64. The same seeded
/// generator is replayed for every forward so stochastic layers (dropout)
/// see identical masks across probes.
inline GradCheckReport grad_check(Layer<double>& layer, const Tensor<double>& input,
                                  const GradCheckOptions& opts, const GradCheckLoss& loss) {
  if (!(opts.eps >= 1e-7 && opts.eps <= 1e-4))
    throw std::invalid_argument("grad_check: eps must be in [1e-7, 1e-4], got " +
                                std::to_string(opts.eps));

  const Rng forward_rng(opts.seed);
  auto run = [&](const Tensor<double>& x) {
    Rng replay = forward_rng;
    return layer.forward(x, opts.mode, replay);
  };

  // Analytic pass.
  const Tensor<double> out = run(input);
  const Tensor<double> analytic_dinput = layer.backward(loss.grad(out));
  std::vector<std::string> names{"input"};
  std::vector<Tensor<double>> analytic;
  analytic.push_back(analytic_dinput);
  for (const auto& p : layer.params()) {
    names.push_back(p.name);
    analytic.push_back(*p.grad);
  }

  Rng coord_rng(opts.seed ^ 0x5bd1e995u);
  const std::vector<std::uint8_t> input_skip = layer.fd_skip_mask(input, opts.eps);

  GradCheckReport report;
  report.tolerance = opts.tolerance;

  auto probe_tensor = [&](const std::string& name, Tensor<double>* storage, bool is_input,
                          const Tensor<double>& grads) {
    GradCheckEntry entry;
    entry.tensor = name;
    Tensor<double> scratch = is_input ? input : Tensor<double>();
    Tensor<double>* target = is_input ? &scratch : storage;
    const std::vector<std::size_t> coords =
        detail::pick_coords(target->size(), opts.max_coords_per_tensor, coord_rng);
    for (const std::size_t i : coords) {
      if (is_input && !input_skip.empty() && input_skip[i]) {
        ++entry.skipped;
        continue;
      }
      const double saved = (*target)[i];
      (*target)[i] = saved + opts.eps;
      const double lp = loss.value(run(is_input ? scratch : input));
      (*target)[i] = saved - opts.eps;
      const double lm = loss.value(run(is_input ? scratch : input));
      (*target)[i] = saved;
      const double fd = (lp - lm) / (2.0 * opts.eps);
      entry.max_rel_err = std::max(entry.max_rel_err, detail::rel_err(grads[i], fd));
      ++entry.checked;
    }
    report.entries.push_back(entry);
  };

  probe_tensor("input", nullptr, true, analytic[0]);
  std::size_t k = 1;
  for (const auto& p : layer.params()) {
    probe_tensor(p.name, p.value, false, analytic[k]);
    ++k;
  }

  report.max_rel_err = 0.0;
  for (const auto& e : report.entries) report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
  report.passed = report.max_rel_err < opts.tolerance;
  return report;
}

inline GradCheckReport grad_check(Layer<double>& layer, const Tensor<double>& input,
                                  const GradCheckOptions& opts = {}) {
  return grad_check(layer, input, opts, sum_loss());
}

} // namespace facechannel
