#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "facechannel/layers.hpp"
#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"
#include "facechannel/weights.hpp"

namespace facechannel {

enum class Head { categorical, dimensional, both };

struct ModelConfig {
  std::size_t input_h = 128;
  std::size_t input_w = 128;
  std::size_t input_channels = 3;
  /// Filter counts per conv layer, grouped into blocks; a 2x2 pool (and
  /// dropout) follows each block.
  std::vector<std::vector<std::size_t>> conv_blocks = {
      {16, 16}, {32, 32}, {64, 64, 64}, {128, 128, 128}};
  std::size_t dense_units = 200;
  Head head = Head::categorical;
  std::size_t num_classes = 8;
  double dropout_rate = 0.5;
  int shunting_kernel = 3;
  std::uint64_t seed = 7;

  std::size_t conv_layer_count() const {
    std::size_t n = 0;
    for (const auto& b : conv_blocks) n += b.size();
    return n;
  }

  /// Closed-form trainable parameter count for this configuration.
  std::size_t parameter_count() const {
    std::size_t total = 0;
    std::size_t in_c = input_channels;
    for (const auto& block : conv_blocks)
      for (const std::size_t f : block) {
        total += f * in_c * 9 + f; // 3x3 conv weights + bias
        total += 2 * f;            // batch norm gamma + beta
        in_c = f;
      }
    const std::size_t k = static_cast<std::size_t>(shunting_kernel);
    total += in_c * in_c * k * k + in_c; // shunting inhibitory field + decay
    const std::size_t pools = conv_blocks.size();
    const std::size_t flat = (input_h >> pools) * (input_w >> pools) * in_c;
    total += flat * dense_units + dense_units;
    if (head == Head::categorical || head == Head::both)
      total += dense_units * num_classes + num_classes;
    if (head == Head::dimensional || head == Head::both) total += dense_units * 2 + 2;
    return total;
  }

  void validate() const {
    if (input_h != 128 || input_w != 128 || input_channels != 3)
      throw std::invalid_argument("model config: input size must be 3x128x128, got " +
                                  std::to_string(input_channels) + "x" + std::to_string(input_h) +
                                  "x" + std::to_string(input_w));
    if (conv_blocks.size() != 4)
      throw std::invalid_argument("model config: expected exactly 4 pool stages, got " +
                                  std::to_string(conv_blocks.size()));
    if (conv_layer_count() != 10)
      throw std::invalid_argument("model config: expected exactly 10 convolutional layers, got " +
                                  std::to_string(conv_layer_count()));
    for (const auto& b : conv_blocks)
      for (const std::size_t f : b)
        if (f == 0) throw std::invalid_argument("model config: conv width must be positive");
    if (dense_units == 0)
      throw std::invalid_argument("model config: dense_units must be positive");
    if ((head == Head::categorical || head == Head::both) && num_classes < 2)
      throw std::invalid_argument("model config: categorical head needs at least 2 classes, got " +
                                  std::to_string(num_classes));
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw std::invalid_argument("model config: dropout_rate must be in [0,1), got " +
                                  std::to_string(dropout_rate));
    if (shunting_kernel < 1 || shunting_kernel % 2 == 0)
      throw std::invalid_argument("model config: shunting_kernel must be odd and positive, got " +
                                  std::to_string(shunting_kernel));
    const std::size_t count = parameter_count();
    if (count < 1'700'000 || count > 2'300'000)
      throw std::invalid_argument("model config: trainable parameter count " +
                                  std::to_string(count) + " outside 2,000,000 +/- 15%");
  }
};

template <typename T>
struct Predictions {
  Tensor<T> categorical; // [N,K] rows summing to 1; empty if head absent
  Tensor<T> dimensional; // [N,2]; clipped to [-1,1] in eval mode; empty if absent
};

struct ArchitectureSummary {
  std::size_t conv_layers = 0;
  std::size_t pool_layers = 0;
  std::size_t dense_units = 0;
  std::size_t input_h = 0, input_w = 0;
  std::size_t final_h = 0, final_w = 0;
  std::size_t parameter_count = 0;

  std::string to_string() const {
    std::ostringstream os;
    os << conv_layers << " conv layers, " << pool_layers << " pools, dense " << dense_units
       << ", input " << input_h << "x" << input_w << ", final map " << final_h << "x" << final_w
       << ", " << parameter_count << " trainable parameters";
    return os.str();
  }
};

/// The FaceChannel network: four conv blocks (conv -> batch norm -> ReLU),
/// each closed by a 2x2 max pool and dropout, shunting inhibition on the
/// final conv activation, then flatten -> dense -> ReLU -> head(s).
template <typename T>
class Model {
public:
  explicit Model(const ModelConfig& config) : config_(config) {
    config_.validate();
    Rng init(config_.seed);
    std::size_t in_c = config_.input_channels;
    std::size_t conv_idx = 0;
    const std::size_t total_convs = config_.conv_layer_count();
    for (const auto& block : config_.conv_blocks) {
      for (const std::size_t f : block) {
        ++conv_idx;
        const std::string idx = std::to_string(conv_idx);
        push_trunk(std::make_unique<Conv2d<T>>(in_c, f, 3, 3, 1, 1, init, "conv" + idx), true);
        push_trunk(std::make_unique<BatchNorm2d<T>>(f, "bn" + idx), true);
        push_trunk(std::make_unique<ReLU<T>>(), false);
        in_c = f;
        if (conv_idx == total_convs)
          push_trunk(std::make_unique<ShuntingInhibition<T>>(
                         f, config_.shunting_kernel, config_.shunting_kernel, init, "shunting"),
                     true);
      }
      push_trunk(std::make_unique<MaxPool2d<T>>(), false);
      push_trunk(std::make_unique<Dropout<T>>(config_.dropout_rate), false);
    }
    push_trunk(std::make_unique<Flatten<T>>(), false);
    const std::size_t pools = config_.conv_blocks.size();
    const std::size_t flat = (config_.input_h >> pools) * (config_.input_w >> pools) * in_c;
    push_trunk(std::make_unique<Dense<T>>(flat, config_.dense_units, init, "dense1"), true);
    push_trunk(std::make_unique<ReLU<T>>(), false);

    if (has_categorical_head()) {
      head_cat_ = std::make_unique<Dense<T>>(config_.dense_units, config_.num_classes, init,
                                             "head_cat");
      softmax_ = std::make_unique<Softmax<T>>();
    }
    if (has_dimensional_head())
      head_dim_ = std::make_unique<Dense<T>>(config_.dense_units, 2, init, "head_dim");
  }

  const ModelConfig& config() const { return config_; }
  bool has_categorical_head() const {
    return config_.head == Head::categorical || config_.head == Head::both;
  }
  bool has_dimensional_head() const {
    return config_.head == Head::dimensional || config_.head == Head::both;
  }

  Predictions<T> forward(const Tensor<T>& batch, Mode mode, Rng& rng) {
    if (batch.rank() != 4 || batch.dim(1) != config_.input_channels ||
        batch.dim(2) != config_.input_h || batch.dim(3) != config_.input_w)
      throw std::invalid_argument("forward: expected input [N,3,128,128], got " +
                                  shape_to_string(batch.shape()));
    Tensor<T> x = batch;
    for (auto& layer : trunk_) x = layer->forward(x, mode, rng);
    Predictions<T> out;
    if (head_cat_) {
      Tensor<T> logits = head_cat_->forward(x, mode, rng);
      out.categorical = softmax_->forward(logits, mode, rng);
    }
    if (head_dim_) {
      out.dimensional = head_dim_->forward(x, mode, rng);
      if (mode == Mode::eval)
        for (auto& v : out.dimensional.values()) v = std::min(std::max(v, T(-1)), T(1));
    }
    return out;
  }

  /// Backpropagates head gradients (either may be empty) to the input.
  Tensor<T> backward(const Predictions<T>& grad) {
    Tensor<T> dtrunk;
    if (head_cat_ && !grad.categorical.empty()) {
      dtrunk = head_cat_->backward(softmax_->backward(grad.categorical));
    }
    if (head_dim_ && !grad.dimensional.empty()) {
      Tensor<T> d = head_dim_->backward(grad.dimensional);
      dtrunk = dtrunk.empty() ? d : add(dtrunk, d);
    }
    if (dtrunk.empty())
      throw std::invalid_argument("backward: no head gradient provided");
    for (auto it = trunk_.rbegin(); it != trunk_.rend(); ++it) dtrunk = (*it)->backward(dtrunk);
    return dtrunk;
  }

  std::vector<ParamRef<T>> parameters() { return trainable_parameters(0); }

  /// Parameters that remain trainable when the first freeze_prefix
  /// parameter-bearing trunk layers (conv/bn/shunting/dense) are frozen.
  /// Head parameters are never frozen.
  std::vector<ParamRef<T>> trainable_parameters(std::size_t freeze_prefix) {
    if (freeze_prefix > freezable_layer_count())
      throw std::invalid_argument("freeze_prefix " + std::to_string(freeze_prefix) +
                                  " out of range [0," + std::to_string(freezable_layer_count()) +
                                  "]");
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < trunk_.size(); ++i) {
      if (freeze_ordinal_[i] == kNoOrdinal || freeze_ordinal_[i] >= freeze_prefix)
        for (auto& p : trunk_[i]->params()) out.push_back(p);
    }
    if (head_cat_)
      for (auto& p : head_cat_->params()) out.push_back(p);
    if (head_dim_)
      for (auto& p : head_dim_->params()) out.push_back(p);
    return out;
  }

  /// Parameters of the first freeze_prefix parameter-bearing trunk layers.
  std::vector<ParamRef<T>> frozen_parameters(std::size_t freeze_prefix) {
    if (freeze_prefix > freezable_layer_count())
      throw std::invalid_argument("freeze_prefix " + std::to_string(freeze_prefix) +
                                  " out of range [0," + std::to_string(freezable_layer_count()) +
                                  "]");
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < trunk_.size(); ++i)
      if (freeze_ordinal_[i] != kNoOrdinal && freeze_ordinal_[i] < freeze_prefix)
        for (auto& p : trunk_[i]->params()) out.push_back(p);
    return out;
  }

  /// Mark the first freeze_prefix parameter-bearing trunk layers as frozen.
  /// Beyond being skipped by the optimizer, frozen layers also stop their
  /// non-parameter update state (batch-norm running statistics).
  void apply_freeze(std::size_t freeze_prefix) {
    if (freeze_prefix > freezable_layer_count())
      throw std::invalid_argument("freeze_prefix " + std::to_string(freeze_prefix) +
                                  " out of range [0," + std::to_string(freezable_layer_count()) +
                                  "]");
    for (std::size_t i = 0; i < trunk_.size(); ++i)
      trunk_[i]->set_updates_frozen(freeze_ordinal_[i] != kNoOrdinal &&
                                    freeze_ordinal_[i] < freeze_prefix);
  }

  std::vector<ParamRef<T>> state_tensors() {
    std::vector<ParamRef<T>> out;
    for (auto& layer : trunk_)
      for (auto& s : layer->state()) out.push_back(s);
    return out;
  }

  std::size_t freezable_layer_count() const { return freezable_count_; }

  std::size_t parameter_count() {
    std::size_t total = 0;
    for (const auto& p : parameters()) total += p.value->size();
    return total;
  }

  ArchitectureSummary architecture() {
    ArchitectureSummary s;
    for (const auto& layer : trunk_) {
      const std::string kind = layer->kind();
      if (kind == "conv2d") ++s.conv_layers;
      if (kind == "maxpool2d") ++s.pool_layers;
    }
    s.dense_units = config_.dense_units;
    s.input_h = config_.input_h;
    s.input_w = config_.input_w;
    s.final_h = config_.input_h >> s.pool_layers;
    s.final_w = config_.input_w >> s.pool_layers;
    s.parameter_count = parameter_count();
    return s;
  }

  /// All persisted tensors (parameters + running statistics) in file order.
  std::vector<TensorBlob> to_blobs() {
    std::vector<TensorBlob> blobs;
    auto emit = [&blobs](const ParamRef<T>& p) {
      const Tensor<float> v = p.value->template cast<float>();
      blobs.push_back({p.name, v.shape(), v.values()});
    };
    for (auto& layer : trunk_) {
      for (auto& p : layer->params()) emit(p);
      for (auto& s : layer->state()) emit(s);
    }
    if (head_cat_)
      for (auto& p : head_cat_->params()) emit(p);
    if (head_dim_)
      for (auto& p : head_dim_->params()) emit(p);
    return blobs;
  }

  void save(const std::string& path) { write_weight_file(path, to_blobs()); }

  enum class LoadPolicy {
    strict,                  // every tensor must match exactly
    reinit_head_on_mismatch, // head_* tensors may be absent or reshaped; trunk is strict
  };

  void load_blobs(const std::vector<TensorBlob>& blobs, LoadPolicy policy = LoadPolicy::strict) {
    std::map<std::string, const TensorBlob*> by_name;
    for (const auto& b : blobs) {
      if (!by_name.emplace(b.name, &b).second)
        throw std::runtime_error("weight file has duplicate tensor " + b.name);
    }
    std::set<std::string> consumed;
    auto assign = [&](const ParamRef<T>& p, bool is_head) {
      const auto it = by_name.find(p.name);
      if (it == by_name.end()) {
        if (is_head && policy == LoadPolicy::reinit_head_on_mismatch) return; // keep fresh init
        throw std::runtime_error("weight file does not provide tensor " + p.name);
      }
      const TensorBlob& b = *it->second;
      if (b.shape != p.value->shape()) {
        if (is_head && policy == LoadPolicy::reinit_head_on_mismatch) {
          consumed.insert(p.name);
          return;
        }
        throw std::runtime_error("shape mismatch for " + p.name + ": file " +
                                 shape_to_string(b.shape) + ", model " +
                                 shape_to_string(p.value->shape()));
      }
      for (std::size_t i = 0; i < b.data.size(); ++i) (*p.value)[i] = static_cast<T>(b.data[i]);
      consumed.insert(p.name);
    };

    for (auto& layer : trunk_) {
      for (auto& p : layer->params()) assign(p, false);
      for (auto& s : layer->state()) assign(s, false);
      layer->on_state_loaded();
    }
    if (head_cat_)
      for (auto& p : head_cat_->params()) assign(p, true);
    if (head_dim_)
      for (auto& p : head_dim_->params()) assign(p, true);

    for (const auto& [name, blob] : by_name) {
      (void)blob;
      if (consumed.count(name)) continue;
      const bool is_head = name.rfind("head_", 0) == 0;
      if (is_head && policy == LoadPolicy::reinit_head_on_mismatch) continue;
      throw std::runtime_error("weight file has unexpected tensor " + name);
    }
  }

  void load(const std::string& path, LoadPolicy policy = LoadPolicy::strict) {
    load_blobs(read_weight_file(path), policy);
  }

private:
  static constexpr std::size_t kNoOrdinal = static_cast<std::size_t>(-1);

  void push_trunk(std::unique_ptr<Layer<T>> layer, bool counts_for_freeze) {
    freeze_ordinal_.push_back(counts_for_freeze ? freezable_count_++ : kNoOrdinal);
    trunk_.push_back(std::move(layer));
  }

  ModelConfig config_;
  std::vector<std::unique_ptr<Layer<T>>> trunk_;
  std::vector<std::size_t> freeze_ordinal_;
  std::size_t freezable_count_ = 0;
  std::unique_ptr<Dense<T>> head_cat_;
  std::unique_ptr<Softmax<T>> softmax_;
  std::unique_ptr<Dense<T>> head_dim_;
};

/// Reconstructs a ModelConfig from a weight file's tensor directory. Widths,
/// dense size, head type, and shunting kernel come from tensor shapes; the
/// block grouping is taken from `base` when its widths match, else the
/// default 2-2-3-3 grouping. Dropout and seed are not stored in files and
/// keep base values.
inline ModelConfig config_from_blobs(const std::vector<TensorBlob>& blobs,
                                     const ModelConfig& base = {}) {
  std::map<std::string, const TensorBlob*> by_name;
  for (const auto& b : blobs) by_name[b.name] = &b;

  std::vector<std::size_t> widths;
  for (std::size_t i = 1;; ++i) {
    const auto it = by_name.find("conv" + std::to_string(i) + ".weight");
    if (it == by_name.end()) break;
    if (it->second->shape.size() != 4)
      throw std::runtime_error("weight file: conv" + std::to_string(i) + ".weight is not rank 4");
    widths.push_back(it->second->shape[0]);
  }
  if (widths.empty()) throw std::runtime_error("weight file contains no conv layers");

  ModelConfig cfg = base;
  std::vector<std::size_t> flat_base;
  for (const auto& b : cfg.conv_blocks) flat_base.insert(flat_base.end(), b.begin(), b.end());
  if (flat_base != widths) {
    static const std::size_t kGrouping[4] = {2, 2, 3, 3};
    cfg.conv_blocks.clear();
    std::size_t at = 0;
    for (const std::size_t g : kGrouping) {
      if (at + g > widths.size()) break;
      cfg.conv_blocks.emplace_back(widths.begin() + at, widths.begin() + at + g);
      at += g;
    }
    if (at != widths.size())
      throw std::runtime_error("weight file: cannot infer block grouping for " +
                               std::to_string(widths.size()) + " conv layers");
  }

  const auto dense = by_name.find("dense1.weight");
  if (dense == by_name.end()) throw std::runtime_error("weight file does not provide tensor dense1.weight");
  cfg.dense_units = dense->second->shape.at(1);

  const auto shunt = by_name.find("shunting.inhib_weight");
  if (shunt != by_name.end() && shunt->second->shape.size() == 4)
    cfg.shunting_kernel = static_cast<int>(shunt->second->shape[2]);

  const bool has_cat = by_name.count("head_cat.weight") != 0;
  const bool has_dim = by_name.count("head_dim.weight") != 0;
  if (has_cat && has_dim)
    cfg.head = Head::both;
  else if (has_dim)
    cfg.head = Head::dimensional;
  else if (has_cat)
    cfg.head = Head::categorical;
  else
    throw std::runtime_error("weight file provides no head tensors");
  if (has_cat) cfg.num_classes = by_name.at("head_cat.weight")->shape.at(1);
  return cfg;
}

/// Build a model from config and load weights strictly.
inline Model<float> load_model(const std::string& path, const ModelConfig& config,
                               Model<float>::LoadPolicy policy = Model<float>::LoadPolicy::strict) {
  Model<float> model(config);
  model.load(path, policy);
  return model;
}

/// Build a model whose configuration is inferred from the weight file.
inline Model<float> load_model(const std::string& path) {
  const std::vector<TensorBlob> blobs = read_weight_file(path);
  Model<float> model(config_from_blobs(blobs));
  model.load_blobs(blobs);
  return model;
}

} // namespace facechannel
