#include "facechannel/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace facechannel {

namespace {

struct Moments {
  double mean_x, mean_y, var_x, var_y, cov;
};

Moments moments(const char* op, const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument(std::string(op) + ": length mismatch: " + std::to_string(x.size()) +
                                " vs " + std::to_string(y.size()));
  if (x.size() < 2)
    throw std::invalid_argument(std::string(op) + ": needs at least 2 samples, got " +
                                std::to_string(x.size()));
  const double n = static_cast<double>(x.size());
  Moments m{0, 0, 0, 0, 0};
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.mean_x += x[i];
    m.mean_y += y[i];
  }
  m.mean_x /= n;
  m.mean_y /= n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - m.mean_x;
    const double dy = y[i] - m.mean_y;
    m.var_x += dx * dx;
    m.var_y += dy * dy;
    m.cov += dx * dy;
  }
  m.var_x /= n;
  m.var_y /= n;
  m.cov /= n;
  return m;
}

} // namespace

double ccc(const std::vector<double>& x, const std::vector<double>& y) {
  const Moments m = moments("ccc", x, y);
  const double dm = m.mean_x - m.mean_y;
  const double denom = m.var_x + m.var_y + dm * dm;
  if (denom == 0.0) return 1.0; // both constant with equal means: perfect agreement
  return 2.0 * m.cov / denom;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const Moments m = moments("pearson", x, y);
  if (m.var_x == 0.0 || m.var_y == 0.0)
    throw std::domain_error("pearson: zero variance");
  return m.cov / std::sqrt(m.var_x * m.var_y);
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("accuracy: length mismatch: " + std::to_string(predicted.size()) +
                                " vs " + std::to_string(truth.size()));
  if (predicted.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

std::vector<std::vector<std::size_t>> confusion(const std::vector<std::size_t>& predicted,
                                                const std::vector<std::size_t>& truth,
                                                std::size_t num_classes) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("confusion: length mismatch: " + std::to_string(predicted.size()) +
                                " vs " + std::to_string(truth.size()));
  std::vector<std::vector<std::size_t>> counts(num_classes,
                                               std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (truth[i] >= num_classes)
      throw std::out_of_range("confusion: true class " + std::to_string(truth[i]) +
                              " out of range [0," + std::to_string(num_classes) + ")");
    if (predicted[i] >= num_classes)
      throw std::out_of_range("confusion: predicted class " + std::to_string(predicted[i]) +
                              " out of range [0," + std::to_string(num_classes) + ")");
    ++counts[truth[i]][predicted[i]];
  }
  return counts;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy ? nlohmann::json(*accuracy) : nlohmann::json(nullptr);
  j["ccc_arousal"] = ccc_arousal ? nlohmann::json(*ccc_arousal) : nlohmann::json(nullptr);
  j["ccc_valence"] = ccc_valence ? nlohmann::json(*ccc_valence) : nlohmann::json(nullptr);
  j["confusion"] = confusion ? nlohmann::json(*confusion) : nlohmann::json(nullptr);
  j["n"] = n;
  return j.dump(2);
}

} // namespace facechannel
