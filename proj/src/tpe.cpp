#include "facechannel/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace facechannel {

void SearchSpace::validate() const {
  if (dims.empty()) throw std::invalid_argument("search space: no dimensions");
  std::set<std::string> names;
  for (const auto& [name, dim] : dims) {
    if (name.empty()) throw std::invalid_argument("search space: empty dimension name");
    if (!names.insert(name).second)
      throw std::invalid_argument("search space: duplicate dimension '" + name + "'");
    switch (dim.kind) {
      case Dimension::Kind::uniform:
        if (!(dim.lo < dim.hi))
          throw std::invalid_argument("dimension '" + name + "': lo must be < hi");
        break;
      case Dimension::Kind::log_uniform:
        if (!(dim.lo < dim.hi))
          throw std::invalid_argument("dimension '" + name + "': lo must be < hi");
        if (!(dim.lo > 0))
          throw std::invalid_argument("dimension '" + name + "': log_uniform needs lo > 0");
        break;
      case Dimension::Kind::choice:
        if (dim.options.empty())
          throw std::invalid_argument("dimension '" + name + "': choice needs options");
        break;
    }
  }
}

namespace {

double prior_sample(const Dimension& dim, Rng& rng) {
  switch (dim.kind) {
    case Dimension::Kind::uniform: return rng.uniform(dim.lo, dim.hi);
    case Dimension::Kind::log_uniform:
      return std::exp(rng.uniform(std::log(dim.lo), std::log(dim.hi)));
    case Dimension::Kind::choice: return dim.options[rng.uniform_index(dim.options.size())];
  }
  return 0.0;
}

struct ParzenSet {
  std::vector<double> centers; // sorted, in transformed space
  std::vector<double> widths;

  double density(double x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const double z = (x - centers[i]) / widths[i];
      acc += std::exp(-0.5 * z * z) / (widths[i] * std::sqrt(2.0 * 3.141592653589793));
    }
    return acc / static_cast<double>(centers.size());
  }
};

/// Kernel width per center: the larger neighbor gap, floored by
/// range/min(100,n) and capped at the full range. n is the completed-trial
/// count, so kernels tighten as evidence accumulates.
ParzenSet fit_parzen(std::vector<double> values, double lo, double hi, std::size_t n_completed) {
  std::sort(values.begin(), values.end());
  const double range = hi - lo;
  const double floor_bw = range / static_cast<double>(std::min<std::size_t>(100, n_completed));
  ParzenSet set;
  set.centers = values;
  set.widths.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double spacing = 0.0;
    if (values.size() > 1) {
      if (i == 0)
        spacing = values[1] - values[0];
      else if (i + 1 == values.size())
        spacing = values[i] - values[i - 1];
      else
        spacing = std::max(values[i] - values[i - 1], values[i + 1] - values[i]);
    }
    set.widths[i] = std::min(std::max({spacing, floor_bw, 1e-12}), range);
  }
  return set;
}

struct CategoricalDensity {
  std::vector<double> probs; // Laplace-smoothed option frequencies

  static CategoricalDensity fit(const std::vector<double>& values, const Dimension& dim) {
    CategoricalDensity d;
    const std::size_t k = dim.options.size();
    std::vector<std::size_t> counts(k, 0);
    for (const double v : values)
      for (std::size_t j = 0; j < k; ++j)
        if (v == dim.options[j]) {
          ++counts[j];
          break;
        }
    d.probs.resize(k);
    for (std::size_t j = 0; j < k; ++j)
      d.probs[j] = (static_cast<double>(counts[j]) + 1.0) /
                   (static_cast<double>(values.size()) + static_cast<double>(k));
    return d;
  }

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      acc += probs[j];
      if (u < acc) return j;
    }
    return probs.size() - 1;
  }
};

double to_internal(const Dimension& dim, double x) {
  return dim.kind == Dimension::Kind::log_uniform ? std::log(x) : x;
}

double from_internal(const Dimension& dim, double t) {
  return dim.kind == Dimension::Kind::log_uniform ? std::exp(t) : t;
}

} // namespace

ParamPoint suggest(const std::vector<TrialRecord>& history, const SearchSpace& space, Rng& rng,
                   const TpeOptions& options) {
  space.validate();

  std::vector<const TrialRecord*> completed;
  for (const auto& t : history)
    if (t.status == TrialRecord::Status::ok) completed.push_back(&t);

  ParamPoint point;
  if (completed.size() < options.n_startup) {
    for (const auto& [name, dim] : space.dims) point[name] = prior_sample(dim, rng);
    return point;
  }

  std::stable_sort(completed.begin(), completed.end(),
                   [](const TrialRecord* a, const TrialRecord* b) {
                     return a->objective < b->objective;
                   });
  const std::size_t n = completed.size();
  const std::size_t n_good =
      static_cast<std::size_t>(std::ceil(options.gamma * static_cast<double>(n)));
  if (n_good == 0 || n_good >= n) {
    for (const auto& [name, dim] : space.dims) point[name] = prior_sample(dim, rng);
    return point;
  }

  // Per-dimension densities over the good and bad halves of the history.
  struct DimModel {
    const Dimension* dim;
    ParzenSet good_parzen, bad_parzen;
    CategoricalDensity good_cat, bad_cat;
    double tlo = 0, thi = 0;
  };
  std::vector<std::pair<std::string, DimModel>> models;
  for (const auto& [name, dim] : space.dims) {
    DimModel m;
    m.dim = &dim;
    std::vector<double> good_vals, bad_vals;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = completed[i]->config.at(name);
      (i < n_good ? good_vals : bad_vals).push_back(v);
    }
    if (dim.kind == Dimension::Kind::choice) {
      m.good_cat = CategoricalDensity::fit(good_vals, dim);
      m.bad_cat = CategoricalDensity::fit(bad_vals, dim);
    } else {
      m.tlo = to_internal(dim, dim.lo);
      m.thi = to_internal(dim, dim.hi);
      for (auto& v : good_vals) v = to_internal(dim, v);
      for (auto& v : bad_vals) v = to_internal(dim, v);
      m.good_parzen = fit_parzen(std::move(good_vals), m.tlo, m.thi, n);
      m.bad_parzen = fit_parzen(std::move(bad_vals), m.tlo, m.thi, n);
    }
    models.emplace_back(name, std::move(m));
  }

  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < options.candidates; ++c) {
    ParamPoint candidate;
    double score = 0.0; // sum of log(l/g) across dimensions
    for (const auto& [name, m] : models) {
      if (m.dim->kind == Dimension::Kind::choice) {
        const std::size_t j = m.good_cat.sample(rng);
        candidate[name] = m.dim->options[j];
        score += std::log(m.good_cat.probs[j]) - std::log(m.bad_cat.probs[j]);
      } else {
        const std::size_t idx = rng.uniform_index(m.good_parzen.centers.size());
        double t = rng.normal(m.good_parzen.centers[idx], m.good_parzen.widths[idx]);
        t = std::min(std::max(t, m.tlo), m.thi);
        candidate[name] = from_internal(*m.dim, t);
        const double l = std::max(m.good_parzen.density(t), 1e-300);
        const double g = std::max(m.bad_parzen.density(t), 1e-300);
        score += std::log(l) - std::log(g);
      }
    }
    if (score > best_score) {
      best_score = score;
      point = std::move(candidate);
    }
  }
  // Clip continuous values to bounds (Gaussian draws already clipped in
  // transformed space; exp round-trips can still graze the edge).
  for (const auto& [name, dim] : space.dims)
    if (dim.kind != Dimension::Kind::choice)
      point[name] = std::min(std::max(point[name], dim.lo), dim.hi);
  return point;
}

OptimizeResult optimize(const std::function<double(const ParamPoint&)>& objective,
                        const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                        const std::function<void(const TrialRecord&)>& on_trial,
                        std::vector<TrialRecord> history, const TpeOptions& options) {
  if (budget < 1) throw std::invalid_argument("optimize: budget must be >= 1");
  space.validate();
  Rng rng(seed);
  OptimizeResult result;
  result.history = std::move(history);
  while (result.history.size() < budget) {
    TrialRecord trial;
    trial.config = suggest(result.history, space, rng, options);
    try {
      trial.objective = objective(trial.config);
      trial.status = TrialRecord::Status::ok;
    } catch (const std::exception&) {
      trial.objective = 0.0;
      trial.status = TrialRecord::Status::failed;
    }
    result.history.push_back(trial);
    if (on_trial) on_trial(trial);
  }
  for (const auto& t : result.history)
    if (t.status == TrialRecord::Status::ok && (!result.best || t.objective < result.best->objective))
      result.best = t;
  return result;
}

std::string trial_to_json(const TrialRecord& trial) {
  nlohmann::json j;
  j["config"] = trial.config;
  if (trial.status == TrialRecord::Status::ok) {
    j["objective"] = trial.objective;
    j["status"] = "ok";
  } else {
    j["status"] = "failed";
  }
  return j.dump();
}

TrialRecord trial_from_json(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  TrialRecord t;
  for (const auto& [key, value] : j.at("config").items()) t.config[key] = value.get<double>();
  const std::string status = j.at("status").get<std::string>();
  if (status == "ok") {
    t.status = TrialRecord::Status::ok;
    t.objective = j.at("objective").get<double>();
  } else if (status == "failed") {
    t.status = TrialRecord::Status::failed;
  } else {
    throw std::runtime_error("trial record: unknown status '" + status + "'");
  }
  return t;
}

} // namespace facechannel
