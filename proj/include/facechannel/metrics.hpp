#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace facechannel {

/// Concordance correlation coefficient, computed in covariance form
///   2·cov(x,y) / (σx² + σy² + (μx−μy)²)
/// with population (1/n) moments. Total on zero-variance inputs; two
/// identical constant sequences count as perfect agreement (1).
double ccc(const std::vector<double>& x, const std::vector<double>& y);

/// Pearson correlation with population moments. Strict domain: both
/// variances must be positive.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Fraction of exact matches between two class-id sequences.
double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth);

/// K×K count matrix; confusion[t][p] counts samples of true class t
/// predicted as p.
std::vector<std::vector<std::size_t>> confusion(const std::vector<std::size_t>& predicted,
                                                const std::vector<std::size_t>& truth,
                                                std::size_t num_classes);

/// Index of the row maximum; ties break toward the lowest index.
template <typename T>
std::size_t argmax_row(const T* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

struct EvalReport {
  std::optional<double> accuracy;
  std::optional<double> ccc_arousal;
  std::optional<double> ccc_valence;
  std::optional<std::vector<std::vector<std::size_t>>> confusion;
  std::size_t n = 0;

  std::string to_json() const;
};

} // namespace facechannel
