#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "facechannel/rng.hpp"

namespace facechannel {

struct Dimension {
  enum class Kind { uniform, log_uniform, choice };
  Kind kind = Kind::uniform;
  double lo = 0.0, hi = 1.0;    // uniform / log_uniform bounds
  std::vector<double> options;  // choice

  static Dimension uniform(double lo, double hi) { return {Kind::uniform, lo, hi, {}}; }
  static Dimension log_uniform(double lo, double hi) { return {Kind::log_uniform, lo, hi, {}}; }
  static Dimension choice(std::vector<double> options) {
    return {Kind::choice, 0, 0, std::move(options)};
  }
};

struct SearchSpace {
  std::vector<std::pair<std::string, Dimension>> dims;

  void add(const std::string& name, Dimension d) { dims.emplace_back(name, std::move(d)); }
  void validate() const;
};

/// One point in a SearchSpace. Choice dimensions store the chosen option's
/// value (options are numeric).
using ParamPoint = std::map<std::string, double>;

struct TrialRecord {
  ParamPoint config;
  double objective = 0.0; // lower is better; meaningless unless status == ok
  enum class Status { ok, failed } status = Status::ok;
};

struct TpeOptions {
  std::size_t n_startup = 10; // uniform prior sampling until this many completed trials
  double gamma = 0.25;        // quantile split between good and bad sets
  std::size_t candidates = 24;
};

/// Propose the next configuration. Below n_startup completed trials this
/// samples the prior; afterwards it splits history at the gamma quantile,
/// fits per-dimension Parzen densities l (good) and g (bad), draws
/// `candidates` configs from l and returns the one maximizing l/g.
ParamPoint suggest(const std::vector<TrialRecord>& history, const SearchSpace& space, Rng& rng,
                   const TpeOptions& options = {});

struct OptimizeResult {
  std::optional<TrialRecord> best; // lowest objective among ok trials
  std::vector<TrialRecord> history;
};

/// Sequential suggest/evaluate loop, minimizing. An objective exception
/// marks the trial failed and the loop continues. `history` seeds a resumed
/// run and counts toward `budget` (the total trial target).
OptimizeResult optimize(const std::function<double(const ParamPoint&)>& objective,
                        const SearchSpace& space, std::size_t budget, std::uint64_t seed,
                        const std::function<void(const TrialRecord&)>& on_trial = nullptr,
                        std::vector<TrialRecord> history = {}, const TpeOptions& options = {});

// JSON-lines persistence, one TrialRecord per line.
std::string trial_to_json(const TrialRecord& trial);
TrialRecord trial_from_json(const std::string& line);

} // namespace facechannel
