#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "facechannel/data.hpp"
#include "facechannel/losses.hpp"
#include "facechannel/metrics.hpp"
#include "facechannel/model.hpp"

namespace facechannel {

enum class LossKind { soft_cross_entropy, mse, ccc };

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::soft_cross_entropy: return "soft_cross_entropy";
    case LossKind::mse: return "mse";
    case LossKind::ccc: return "ccc";
  }
  return "?";
}

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t freeze_prefix = 0; // leading parameter-bearing trunk layers to exclude from updates
  LossKind loss = LossKind::soft_cross_entropy;

  void validate() const {
    // lr = 0 is a well-defined null update (useful for freeze checks).
    if (!(learning_rate >= 0.0))
      throw std::invalid_argument("train config: learning_rate must be >= 0, got " +
                                  std::to_string(learning_rate));
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("train config: momentum must be in [0,1), got " +
                                  std::to_string(momentum));
  }
};

struct EpochStats {
  std::size_t epoch; // 1-based
  double loss;
  double val_metric; // NaN when no validation set was given
};

using History = std::vector<EpochStats>;

inline std::string history_to_csv(const History& history) {
  std::string out = "epoch,loss,val_metric\n";
  char buf[96];
  for (const auto& e : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e.epoch, e.loss, e.val_metric);
    out += buf;
  }
  return out;
}

inline void write_history_csv(const std::string& path, const History& history) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << history_to_csv(history);
  if (!f) throw std::runtime_error("write failed: " + path);
}

/// v ← momentum·v − lr·g; p ← p + v. Velocity buffers are keyed by
/// parameter name and created as zeros on first touch.
template <typename T>
class SgdMomentum {
public:
  SgdMomentum(double learning_rate, double momentum)
      : lr_(static_cast<T>(learning_rate)), momentum_(static_cast<T>(momentum)) {}

  void step(const std::vector<ParamRef<T>>& params) {
    for (const auto& p : params) {
      std::vector<T>& v = velocity_[p.name];
      if (v.empty()) v.assign(p.value->size(), T(0));
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] - lr_ * (*p.grad)[i];
        (*p.value)[i] += v[i];
      }
    }
  }

private:
  T lr_, momentum_;
  std::map<std::string, std::vector<T>> velocity_;
};

namespace detail {

template <typename T>
Tensor<T> to_precision(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>)
    return t;
  else
    return t.template cast<T>();
}

template <typename T>
void check_schema_matches(const Model<T>& model, const Dataset& data) {
  if (data.schema == LabelSchema::dimensional) {
    if (!model.has_dimensional_head())
      throw std::invalid_argument("label schema 'dimensional' requires a dimensional head");
  } else {
    if (!model.has_categorical_head())
      throw std::invalid_argument("label schema '" + schema_name(data.schema) +
                                  "' requires a categorical head");
    if (data.num_classes != model.config().num_classes)
      throw std::invalid_argument("label schema has " + std::to_string(data.num_classes) +
                                  " classes but the model head has " +
                                  std::to_string(model.config().num_classes));
  }
}

template <typename T>
void check_loss_matches(LossKind loss, const Dataset& data) {
  const bool dimensional = data.schema == LabelSchema::dimensional;
  if (loss == LossKind::soft_cross_entropy && dimensional)
    throw std::invalid_argument("loss soft_cross_entropy requires categorical or distribution "
                                "labels, label schema is 'dimensional'");
  if (loss != LossKind::soft_cross_entropy && !dimensional)
    throw std::invalid_argument(std::string("loss ") + loss_name(loss) +
                                " requires dimensional labels, label schema is '" +
                                schema_name(data.schema) + "'");
}

} // namespace detail

/// Run the model over a dataset in eval mode and collect raw head outputs.
template <typename T>
Predictions<T> predict_all(Model<T>& model, const Dataset& data, std::size_t batch_size = 32) {
  detail::check_schema_matches(model, data);
  Rng dummy(0);
  Predictions<T> all;
  if (model.has_categorical_head())
    all.categorical = Tensor<T>({data.size(), model.config().num_classes});
  if (model.has_dimensional_head()) all.dimensional = Tensor<T>({data.size(), 2});

  std::vector<std::size_t> indices;
  for (std::size_t at = 0; at < data.size(); at += batch_size) {
    indices.clear();
    for (std::size_t i = at; i < std::min(at + batch_size, data.size()); ++i) indices.push_back(i);
    Tensor<float> images, labels;
    assemble_batch(data, indices, images, labels);
    Predictions<T> out = model.forward(detail::to_precision<T>(images), Mode::eval, dummy);
    if (!all.categorical.empty()) {
      const std::size_t k = all.categorical.dim(1);
      std::copy(out.categorical.data(), out.categorical.data() + out.categorical.size(),
                all.categorical.data() + at * k);
    }
    if (!all.dimensional.empty())
      std::copy(out.dimensional.data(), out.dimensional.data() + out.dimensional.size(),
                all.dimensional.data() + at * 2);
  }
  return all;
}

/// Accuracy + confusion for categorical/distribution labels (the true class
/// of a distribution row is its argmax), CCC per affect dimension for
/// dimensional labels.
template <typename T>
EvalReport evaluate(Model<T>& model, const Dataset& data, std::size_t batch_size = 32) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const Predictions<T> preds = predict_all(model, data, batch_size);
  EvalReport report;
  report.n = data.size();
  if (data.schema == LabelSchema::dimensional) {
    std::vector<double> pv, pa, tv, ta;
    for (std::size_t i = 0; i < data.size(); ++i) {
      pv.push_back(double(preds.dimensional[i * 2]));
      pa.push_back(double(preds.dimensional[i * 2 + 1]));
      tv.push_back(double(data.labels[i][0]));
      ta.push_back(double(data.labels[i][1]));
    }
    report.ccc_valence = ccc(pv, tv);
    report.ccc_arousal = ccc(pa, ta);
  } else {
    const std::size_t k = data.num_classes;
    std::vector<std::size_t> predicted, truth;
    for (std::size_t i = 0; i < data.size(); ++i) {
      predicted.push_back(argmax_row(preds.categorical.data() + i * k, k));
      truth.push_back(argmax_row(data.labels[i].data(), k));
    }
    report.accuracy = accuracy(predicted, truth);
    report.confusion = confusion(predicted, truth, k);
  }
  return report;
}

/// The scalar used as val_metric: accuracy for class labels, mean CCC for
/// dimensional ones. Higher is better.
inline double headline_metric(const EvalReport& report) {
  if (report.accuracy) return *report.accuracy;
  return 0.5 * (*report.ccc_arousal + *report.ccc_valence);
}

struct TrainCallbacks {
  /// Called after each epoch; returning false stops training early.
  std::function<bool(const EpochStats&)> on_epoch;
};

/// Seeded SGD training loop: epoch-level shuffling, train-mode forward,
/// backprop through the active head, momentum update on the unfrozen
/// parameters. Deterministic for a fixed seed.
template <typename T>
History train(Model<T>& model, const Dataset& train_set, const Dataset* val_set,
              const TrainConfig& cfg, const TrainCallbacks& callbacks = {}) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty dataset");
  detail::check_schema_matches(model, train_set);
  detail::check_loss_matches<T>(cfg.loss, train_set);
  if (val_set) detail::check_schema_matches(model, *val_set);
  if (cfg.loss == LossKind::ccc) {
    const std::size_t tail = train_set.size() % cfg.batch_size;
    if (cfg.batch_size < 2 || tail == 1)
      throw std::invalid_argument(
          "ccc loss needs every batch to hold at least 2 samples; dataset size " +
          std::to_string(train_set.size()) + " with batch_size " + std::to_string(cfg.batch_size) +
          " violates that");
  }

  std::vector<ParamRef<T>> params = model.trainable_parameters(cfg.freeze_prefix);
  model.apply_freeze(cfg.freeze_prefix);
  SgdMomentum<T> optimizer(cfg.learning_rate, cfg.momentum);
  Rng rng(cfg.seed);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  History history;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::vector<std::size_t> indices(
          order.begin() + at, order.begin() + std::min(at + cfg.batch_size, order.size()));
      Tensor<float> images_f, labels_f;
      assemble_batch(train_set, indices, images_f, labels_f);
      const Tensor<T> images = detail::to_precision<T>(images_f);
      const Tensor<T> labels = detail::to_precision<T>(labels_f);

      const Predictions<T> preds = model.forward(images, Mode::train, rng);
      Predictions<T> grads;
      double loss = 0.0;
      switch (cfg.loss) {
        case LossKind::soft_cross_entropy:
          loss = soft_cross_entropy(preds.categorical, labels);
          grads.categorical = soft_cross_entropy_grad(preds.categorical, labels);
          break;
        case LossKind::mse:
          loss = mse_loss(preds.dimensional, labels);
          grads.dimensional = mse_loss_grad(preds.dimensional, labels);
          break;
        case LossKind::ccc:
          loss = ccc_loss(preds.dimensional, labels);
          grads.dimensional = ccc_loss_grad(preds.dimensional, labels);
          break;
      }
      model.backward(grads);
      optimizer.step(params);
      loss_sum += loss;
      ++batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(batches);
    stats.val_metric = val_set ? headline_metric(evaluate(model, *val_set, cfg.batch_size))
                               : std::numeric_limits<double>::quiet_NaN();
    history.push_back(stats);
    if (callbacks.on_epoch && !callbacks.on_epoch(stats)) break;
  }
  return history;
}

/// Fine-tuning continues training of a pretrained model; the distinct entry
/// point exists for the freeze semantics: cfg.freeze_prefix leading trunk
/// layers stay bit-identical while the rest (always including heads) adapt.
/// Head re-initialization on a class-count change happens at load time via
/// LoadPolicy::reinit_head_on_mismatch.
template <typename T>
History finetune(Model<T>& model, const Dataset& train_set, const Dataset* val_set,
                 const TrainConfig& cfg, const TrainCallbacks& callbacks = {}) {
  return train(model, train_set, val_set, cfg, callbacks);
}

} // namespace facechannel
