#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "facechannel/rng.hpp"
#include "facechannel/tensor.hpp"

namespace facechannel {

enum class Mode { train, eval };

/// Named view of one parameter tensor and its gradient buffer.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// A differentiable layer. forward caches whatever backward needs, so
/// backward is only valid after a forward on the same node. Randomness is
/// drawn from the generator handed in, never from global state.
template <typename T>
class Layer {
public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;
  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng) = 0;
  /// Returns d(loss)/d(input); parameter gradients are written to the
  /// layer's grad buffers (overwriting the previous batch).
  virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;
  virtual std::vector<ParamRef<T>> params() { return {}; }
  /// Persisted non-trainable tensors (running statistics).
  virtual std::vector<ParamRef<T>> state() { return {}; }
  virtual void on_state_loaded() {}
  /// Freezing excludes a layer from *all* updates; only layers with
  /// non-parameter update state (batch norm) need to react.
  virtual void set_updates_frozen(bool) {}
  /// Flags input elements where a finite-difference probe of size eps is
  /// unreliable (non-differentiable points such as pooling ties).
  virtual std::vector<std::uint8_t> fd_skip_mask(const Tensor<T>& input, T eps) const {
    (void)input;
    (void)eps;
    return {};
  }
};

namespace detail {

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> nth_image(const Tensor<T>& batch, std::size_t n) {
  const std::size_t c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  Tensor<T> out({c, h, w});
  const T* src = batch.data() + n * c * h * w;
  std::copy(src, src + c * h * w, out.data());
  return out;
}

struct ConvSpec {
  int kh;
  int kw;
  int stride;
  int pad;
};

/// Batched cross-correlation, lowered to im2col + gemm per sample.
/// wmat is the [F, C*kh*kw] row-major view of the filter bank.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& input, const T* wmat, std::size_t filters, const T* bias,
                       const ConvSpec& s) {
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const ConvGeom g = conv_output_geometry("conv2d", h, w, s.kh, s.kw, s.stride, s.pad);
  const std::size_t ck = c * static_cast<std::size_t>(s.kh) * static_cast<std::size_t>(s.kw);
  const std::size_t ohw = g.out_h * g.out_w;
  Tensor<T> out({n, filters, g.out_h, g.out_w});
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor<T> cols = im2col(nth_image(input, i), s.kh, s.kw, s.stride, s.pad);
    T* o = out.data() + i * filters * ohw;
    gemm(wmat, cols.data(), o, filters, ck, ohw);
    if (bias) {
      for (std::size_t f = 0; f < filters; ++f) {
        T* row = o + f * ohw;
        for (std::size_t j = 0; j < ohw; ++j) row[j] += bias[f];
      }
    }
  }
  return out;
}

/// Gradients of conv_forward. Any of dinput/dwmat/dbias may be null.
/// dwmat and dbias are accumulated across the batch and must be pre-zeroed.
template <typename T>
void conv_backward(const Tensor<T>& input, const T* wmat, std::size_t filters,
                   const Tensor<T>& grad_out, const ConvSpec& s, Tensor<T>* dinput, T* dwmat,
                   T* dbias) {
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const ConvGeom g = conv_output_geometry("conv2d", h, w, s.kh, s.kw, s.stride, s.pad);
  const std::size_t ck = c * static_cast<std::size_t>(s.kh) * static_cast<std::size_t>(s.kw);
  const std::size_t ohw = g.out_h * g.out_w;

  Tensor<T> wmat_t({filters, ck}, std::vector<T>(wmat, wmat + filters * ck));
  wmat_t = transpose2d(wmat_t); // [CK, F]

  for (std::size_t i = 0; i < n; ++i) {
    const T* go = grad_out.data() + i * filters * ohw;
    if (dbias) {
      for (std::size_t f = 0; f < filters; ++f) {
        const T* row = go + f * ohw;
        T acc = T(0);
        for (std::size_t j = 0; j < ohw; ++j) acc += row[j];
        dbias[f] += acc;
      }
    }
    if (dwmat) {
      const Tensor<T> cols_t = transpose2d(im2col(nth_image(input, i), s.kh, s.kw, s.stride, s.pad));
      gemm(go, cols_t.data(), dwmat, filters, ohw, ck, /*accumulate=*/true);
    }
    if (dinput) {
      Tensor<T> dcols({ck, ohw});
      gemm(wmat_t.data(), go, dcols.data(), ck, filters, ohw);
      const Tensor<T> dimg = col2im(dcols, c, h, w, s.kh, s.kw, s.stride, s.pad);
      std::copy(dimg.data(), dimg.data() + dimg.size(), dinput->data() + i * c * h * w);
    }
  }
}

} // namespace detail

/// 2-D cross-correlation with per-filter bias.
template <typename T>
class Conv2d final : public Layer<T> {
public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, int kh, int kw, int stride, int pad,
         Rng& init, std::string name = "conv")
      : name_(std::move(name)),
        in_channels_(in_channels),
        spec_{kh, kw, stride, pad},
        weight_({out_channels, in_channels, static_cast<std::size_t>(kh), static_cast<std::size_t>(kw)}),
        bias_({out_channels}),
        dweight_(weight_.shape()),
        dbias_(bias_.shape()) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_channels * kh * kw));
    for (auto& v : weight_.values()) v = static_cast<T>(init.normal(0.0, stddev));
  }

  const char* kind() const override { return "conv2d"; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&) override {
    check_input(input);
    input_ = input;
    return detail::conv_forward(input, weight_.data(), weight_.dim(0), bias_.data(), spec_);
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    Tensor<T> dinput(input_.shape());
    dweight_ = Tensor<T>(weight_.shape());
    dbias_ = Tensor<T>(bias_.shape());
    detail::conv_backward(input_, weight_.data(), weight_.dim(0), grad_output, spec_, &dinput,
                          dweight_.data(), dbias_.data());
    return dinput;
  }

  std::vector<ParamRef<T>> params() override {
    return {{name_ + ".weight", &weight_, &dweight_}, {name_ + ".bias", &bias_, &dbias_}};
  }

  std::size_t out_channels() const { return weight_.dim(0); }

private:
  void check_input(const Tensor<T>& input) const {
    if (input.rank() != 4)
      throw std::invalid_argument("conv2d: expects [N,C,H,W], got " + shape_to_string(input.shape()));
    if (input.dim(1) != in_channels_)
      throw std::invalid_argument("conv2d: input channels " + std::to_string(input.dim(1)) +
                                  " do not match weights " + std::to_string(in_channels_));
  }

  std::string name_;
  std::size_t in_channels_;
  detail::ConvSpec spec_;
  Tensor<T> weight_; // [F,C,kh,kw]
  Tensor<T> bias_;   // [F]
  Tensor<T> dweight_;
  Tensor<T> dbias_;
  Tensor<T> input_;
};

/// 2x2 max pooling with stride 2. Gradient flows to the window argmax only;
/// ties resolve to the first maximal element in row-major scan order.
template <typename T>
class MaxPool2d final : public Layer<T> {
public:
  const char* kind() const override { return "maxpool2d"; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&) override {
    if (input.rank() != 4)
      throw std::invalid_argument("maxpool: expects [N,C,H,W], got " + shape_to_string(input.shape()));
    const std::size_t h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
      throw std::invalid_argument("maxpool: spatial dims must be even, got " + std::to_string(h) +
                                  "x" + std::to_string(w));
    in_shape_ = input.shape();
    const std::size_t n = input.dim(0), c = input.dim(1), oh = h / 2, ow = w / 2;
    Tensor<T> out({n, c, oh, ow});
    argmax_.assign(out.size(), 0);
    const T* in = input.data();
    T* o = out.data();
    std::size_t oi = 0;
    for (std::size_t img = 0; img < n * c; ++img) {
      const T* plane = in + img * h * w;
      const std::size_t base = img * h * w;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++oi) {
          const std::size_t i00 = (2 * y) * w + 2 * x;
          std::size_t best = i00;
          T bv = plane[i00];
          const std::size_t cand[3] = {i00 + 1, i00 + w, i00 + w + 1};
          for (std::size_t k = 0; k < 3; ++k) {
            if (plane[cand[k]] > bv) {
              bv = plane[cand[k]];
              best = cand[k];
            }
          }
          o[oi] = bv;
          argmax_[oi] = base + best;
        }
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    Tensor<T> dinput(in_shape_);
    for (std::size_t i = 0; i < grad_output.size(); ++i) dinput[argmax_[i]] += grad_output[i];
    return dinput;
  }

  std::vector<std::uint8_t> fd_skip_mask(const Tensor<T>& input, T eps) const override {
    std::vector<std::uint8_t> mask(input.size(), 0);
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const T band = T(4) * eps;
    for (std::size_t img = 0; img < n * c; ++img) {
      const T* plane = input.data() + img * h * w;
      for (std::size_t y = 0; y + 1 < h; y += 2) {
        for (std::size_t x = 0; x + 1 < w; x += 2) {
          const std::size_t idx[4] = {y * w + x, y * w + x + 1, (y + 1) * w + x, (y + 1) * w + x + 1};
          T m1 = plane[idx[0]], m2 = -std::numeric_limits<T>::infinity();
          for (int k = 1; k < 4; ++k) {
            if (plane[idx[k]] > m1) {
              m2 = m1;
              m1 = plane[idx[k]];
            } else if (plane[idx[k]] > m2) {
              m2 = plane[idx[k]];
            }
          }
          if (m1 - m2 <= band) {
            // Tied (or almost tied) window: a probe can flip the argmax.
            for (int k = 0; k < 4; ++k) mask[img * h * w + idx[k]] = 1;
          }
        }
      }
    }
    return mask;
  }

private:
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

/// Per-channel batch normalization over [N,C,H,W] with affine scale/shift.
/// Train mode normalizes by batch statistics (epsilon 1e-5) and folds them
/// into running statistics with momentum 0.9; eval mode uses the running
/// statistics and refuses to run before any exist.
template <typename T>
class BatchNorm2d final : public Layer<T> {
public:
  explicit BatchNorm2d(std::size_t channels, std::string name = "bn")
      : name_(std::move(name)),
        gamma_(Tensor<T>::ones({channels})),
        beta_({channels}),
        dgamma_({channels}),
        dbeta_({channels}),
        running_mean_({channels}),
        running_var_(Tensor<T>::ones({channels})) {}

  const char* kind() const override { return "batchnorm2d"; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng&) override {
    if (input.rank() != 4)
      throw std::invalid_argument("batchnorm: expects [N,C,H,W], got " + shape_to_string(input.shape()));
    const std::size_t c = gamma_.size();
    if (input.dim(1) != c)
      throw std::invalid_argument("batchnorm: input channels " + std::to_string(input.dim(1)) +
                                  " do not match " + std::to_string(c));
    const std::size_t n = input.dim(0), h = input.dim(2), w = input.dim(3);
    const std::size_t m = n * h * w;
    last_mode_ = mode;
    in_shape_ = input.shape();
    xhat_ = Tensor<T>(input.shape());
    inv_std_ = Tensor<T>({c});
    Tensor<T> out(input.shape());

    if (mode == Mode::train) {
      if (m < 2)
        throw std::invalid_argument("batchnorm: needs at least 2 values per channel in train mode");
      for (std::size_t ch = 0; ch < c; ++ch) {
        T mean = T(0);
        for_channel(input, ch, [&](T v, std::size_t) { mean += v; });
        mean /= static_cast<T>(m);
        T var = T(0);
        for_channel(input, ch, [&](T v, std::size_t) { var += (v - mean) * (v - mean); });
        var /= static_cast<T>(m);
        const T inv = T(1) / std::sqrt(var + kEps);
        inv_std_[ch] = inv;
        for_channel(input, ch, [&](T v, std::size_t i) {
          xhat_[i] = (v - mean) * inv;
          out[i] = gamma_[ch] * xhat_[i] + beta_[ch];
        });
        if (!updates_frozen_) {
          running_mean_[ch] = kMomentum * running_mean_[ch] + (T(1) - kMomentum) * mean;
          running_var_[ch] = kMomentum * running_var_[ch] + (T(1) - kMomentum) * var;
        }
      }
      if (!updates_frozen_) initialized_ = true;
    } else {
      if (!initialized_)
        throw std::runtime_error("batchnorm: uninitialized running statistics");
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T inv = T(1) / std::sqrt(running_var_[ch] + kEps);
        inv_std_[ch] = inv;
        const T mean = running_mean_[ch];
        for_channel(input, ch, [&](T v, std::size_t i) {
          xhat_[i] = (v - mean) * inv;
          out[i] = gamma_[ch] * xhat_[i] + beta_[ch];
        });
      }
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    const std::size_t c = gamma_.size();
    const std::size_t m = in_shape_[0] * in_shape_[2] * in_shape_[3];
    Tensor<T> dinput(in_shape_);
    dgamma_ = Tensor<T>({c});
    dbeta_ = Tensor<T>({c});
    for (std::size_t ch = 0; ch < c; ++ch) {
      T sum_g = T(0), sum_gx = T(0);
      for_channel(grad_output, ch, [&](T g, std::size_t i) {
        sum_g += g;
        sum_gx += g * xhat_[i];
      });
      dgamma_[ch] = sum_gx;
      dbeta_[ch] = sum_g;
      const T scale = gamma_[ch] * inv_std_[ch];
      if (last_mode_ == Mode::train) {
        const T mg = sum_g / static_cast<T>(m);
        const T mgx = sum_gx / static_cast<T>(m);
        for_channel(grad_output, ch, [&](T g, std::size_t i) {
          dinput[i] = scale * (g - mg - xhat_[i] * mgx);
        });
      } else {
        for_channel(grad_output, ch, [&](T g, std::size_t i) { dinput[i] = scale * g; });
      }
    }
    return dinput;
  }

  std::vector<ParamRef<T>> params() override {
    return {{name_ + ".gamma", &gamma_, &dgamma_}, {name_ + ".beta", &beta_, &dbeta_}};
  }

  std::vector<ParamRef<T>> state() override {
    return {{name_ + ".running_mean", &running_mean_, nullptr},
            {name_ + ".running_var", &running_var_, nullptr}};
  }

  void on_state_loaded() override { initialized_ = true; }

  /// Freezing a batch-norm layer also stops its running-statistic updates
  /// (train mode still normalizes by batch statistics).
  void set_updates_frozen(bool frozen) override { updates_frozen_ = frozen; }

  bool has_running_statistics() const { return initialized_; }

private:
  static constexpr T kEps = static_cast<T>(1e-5);
  static constexpr T kMomentum = static_cast<T>(0.9);

  template <typename Fn>
  void for_channel(const Tensor<T>& t, std::size_t ch, Fn&& fn) const {
    const std::size_t n = t.dim(0), c = t.dim(1), hw = t.dim(2) * t.dim(3);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) fn(t[base + j], base + j);
    }
  }

  std::string name_;
  Tensor<T> gamma_, beta_, dgamma_, dbeta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_, inv_std_;
  Shape in_shape_;
  Mode last_mode_ = Mode::train;
  bool initialized_ = false;
  bool updates_frozen_ = false;
};

/// Inverted dropout: train mode zeroes each element with probability rate and
/// scales survivors by 1/(1-rate); eval mode is the bit-exact identity.
template <typename T>
class Dropout final : public Layer<T> {
public:
  explicit Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0))
      throw std::invalid_argument("dropout: rate must be in [0,1), got " + std::to_string(rate));
  }

  const char* kind() const override { return "dropout"; }

  Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng) override {
    if (mode == Mode::eval || rate_ == 0.0) {
      mask_ = Tensor<T>();
      return input;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_ = Tensor<T>(input.shape());
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
      mask_[i] = rng.uniform01() < rate_ ? T(0) : keep_scale;
      out[i] = input[i] * mask_[i];
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    if (mask_.empty()) return grad_output;
    return mul(grad_output, mask_);
  }

  double rate() const { return rate_; }

private:
  double rate_;
  Tensor<T> mask_;
};

/// Divisive shunting inhibition. The inhibitory signal I is a learned
/// same-padding convolution of the excitatory map u through a ReLU, and each
/// unit is rescaled as S = u / (softplus(a) + I + 1e-4) with one decay term a
/// per channel. ReLU on I plus the softplus keep the denominator positive.
template <typename T>
class ShuntingInhibition final : public Layer<T> {
public:
  ShuntingInhibition(std::size_t channels, int kh, int kw, Rng& init, std::string name = "shunting")
      : name_(std::move(name)),
        channels_(channels),
        spec_{kh, kw, 1, (kh - 1) / 2},
        weight_({channels, channels, static_cast<std::size_t>(kh), static_cast<std::size_t>(kw)}),
        decay_({channels}),
        dweight_(weight_.shape()),
        ddecay_(decay_.shape()) {
    if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0 || kh != kw)
      throw std::invalid_argument("shunting: inhibitory kernel must be square and odd, got " +
                                  std::to_string(kh) + "x" + std::to_string(kw));
    // Small inhibitory weights and softplus(a) = 1 start the layer near u/1.
    for (auto& v : weight_.values()) v = static_cast<T>(init.normal(0.0, 0.01));
    const T a0 = static_cast<T>(std::log(std::exp(1.0) - 1.0));
    for (auto& v : decay_.values()) v = a0;
  }

  const char* kind() const override { return "shunting"; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&) override {
    if (input.rank() != 4)
      throw std::invalid_argument("shunting: expects [N,C,H,W], got " + shape_to_string(input.shape()));
    if (input.dim(1) != channels_)
      throw std::invalid_argument("shunting: input channels " + std::to_string(input.dim(1)) +
                                  " do not match inhibitory field " + std::to_string(channels_));
    input_ = input;
    pre_ = detail::conv_forward(input, weight_.data(), channels_, static_cast<const T*>(nullptr),
                                spec_);
    denom_ = Tensor<T>(input.shape());
    Tensor<T> out(input.shape());
    const std::size_t chw = input.dim(1) * input.dim(2) * input.dim(3);
    const std::size_t hw = input.dim(2) * input.dim(3);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const std::size_t ch = (i % chw) / hw;
      const T inhib = pre_[i] > T(0) ? pre_[i] : T(0);
      denom_[i] = detail::softplus(decay_[ch]) + inhib + kEps;
      out[i] = input[i] / denom_[i];
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    const std::size_t chw = input_.dim(1) * input_.dim(2) * input_.dim(3);
    const std::size_t hw = input_.dim(2) * input_.dim(3);
    Tensor<T> ddenom(input_.shape());
    Tensor<T> dpre(input_.shape());
    Tensor<T> dinput(input_.shape());
    ddecay_ = Tensor<T>(decay_.shape());
    dweight_ = Tensor<T>(weight_.shape());
    for (std::size_t i = 0; i < input_.size(); ++i) {
      const T g = grad_output[i];
      const T d = denom_[i];
      ddenom[i] = -g * input_[i] / (d * d);
      dpre[i] = pre_[i] > T(0) ? ddenom[i] : T(0);
      dinput[i] = g / d;
      const std::size_t ch = (i % chw) / hw;
      ddecay_[ch] += ddenom[i];
    }
    for (std::size_t ch = 0; ch < channels_; ++ch)
      ddecay_[ch] *= detail::sigmoid(decay_[ch]);
    Tensor<T> dinput_conv(input_.shape());
    detail::conv_backward(input_, weight_.data(), channels_, dpre, spec_, &dinput_conv,
                          dweight_.data(), static_cast<T*>(nullptr));
    for (std::size_t i = 0; i < dinput.size(); ++i) dinput[i] += dinput_conv[i];
    return dinput;
  }

  std::vector<ParamRef<T>> params() override {
    return {{name_ + ".inhib_weight", &weight_, &dweight_}, {name_ + ".decay", &decay_, &ddecay_}};
  }

private:
  static constexpr T kEps = static_cast<T>(1e-4);

  std::string name_;
  std::size_t channels_;
  detail::ConvSpec spec_;
  Tensor<T> weight_; // [C,C,kh,kw]
  Tensor<T> decay_;  // [C], unconstrained; softplus-mapped in the denominator
  Tensor<T> dweight_, ddecay_;
  Tensor<T> input_, pre_, denom_;
};

/// Affine map [N,D] -> [N,M].
template <typename T>
class Dense final : public Layer<T> {
public:
  Dense(std::size_t in_dim, std::size_t out_dim, Rng& init, std::string name = "dense")
      : name_(std::move(name)),
        weight_({in_dim, out_dim}),
        bias_({out_dim}),
        dweight_(weight_.shape()),
        dbias_(bias_.shape()) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
    for (auto& v : weight_.values()) v = static_cast<T>(init.normal(0.0, stddev));
  }

  const char* kind() const override { return "dense"; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&) override {
    if (input.rank() != 2)
      throw std::invalid_argument("dense: expects [N,D], got " + shape_to_string(input.shape()));
    if (input.dim(1) != weight_.dim(0))
      throw std::invalid_argument("dense: input dimension " + std::to_string(input.dim(1)) +
                                  " does not match weights " + std::to_string(weight_.dim(0)));
    input_ = input;
    Tensor<T> out = matmul(input, weight_);
    const std::size_t m = bias_.size();
    for (std::size_t i = 0; i < input.dim(0); ++i)
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bias_[j];
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    dweight_ = matmul(transpose2d(input_), grad_output);
    dbias_ = Tensor<T>(bias_.shape());
    const std::size_t m = bias_.size();
    for (std::size_t i = 0; i < grad_output.dim(0); ++i)
      for (std::size_t j = 0; j < m; ++j) dbias_[j] += grad_output[i * m + j];
    return matmul(grad_output, transpose2d(weight_));
  }

  std::vector<ParamRef<T>> params() override {
    return {{name_ + ".weight", &weight_, &dweight_}, {name_ + ".bias", &bias_, &dbias_}};
  }

  std::size_t in_dim() const { return weight_.dim(0); }
  std::size_t out_dim() const { return weight_.dim(1); }

private:
  std::string name_;
  Tensor<T> weight_; // [D,M]
  Tensor<T> bias_;   // [M]
  Tensor<T> dweight_, dbias_;
  Tensor<T> input_;
};

/// max(0, x); the subgradient at 0 is taken as 0.
template <typename T>
class ReLU final : public Layer<T> {
public:
  const char* kind() const override { return "relu"; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&) override {
    mask_ = Tensor<T>(input.shape());
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
      const bool pos = input[i] > T(0);
      mask_[i] = pos ? T(1) : T(0);
      out[i] = pos ? input[i] : T(0);
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override { return mul(grad_output, mask_); }

private:
  Tensor<T> mask_;
};

/// Row softmax over [N,K], computed with max subtraction.
template <typename T>
class Softmax final : public Layer<T> {
public:
  const char* kind() const override { return "softmax"; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&) override {
    if (input.rank() != 2)
      throw std::invalid_argument("softmax: expects [N,K], got " + shape_to_string(input.shape()));
    const std::size_t n = input.dim(0), k = input.dim(1);
    probs_ = Tensor<T>(input.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = input.data() + i * k;
      T* prow = probs_.data() + i * k;
      T mx = row[0];
      for (std::size_t j = 1; j < k; ++j) mx = row[j] > mx ? row[j] : mx;
      T z = T(0);
      for (std::size_t j = 0; j < k; ++j) {
        prow[j] = std::exp(row[j] - mx);
        z += prow[j];
      }
      for (std::size_t j = 0; j < k; ++j) prow[j] /= z;
    }
    return probs_;
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override {
    const std::size_t n = probs_.dim(0), k = probs_.dim(1);
    Tensor<T> dinput(probs_.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const T* g = grad_output.data() + i * k;
      const T* p = probs_.data() + i * k;
      T dot = T(0);
      for (std::size_t j = 0; j < k; ++j) dot += g[j] * p[j];
      for (std::size_t j = 0; j < k; ++j) dinput[i * k + j] = p[j] * (g[j] - dot);
    }
    return dinput;
  }

private:
  Tensor<T> probs_;
};

/// [N,...] -> [N, prod(rest)].
template <typename T>
class Flatten final : public Layer<T> {
public:
  const char* kind() const override { return "flatten"; }

  Tensor<T> forward(const Tensor<T>& input, Mode, Rng&) override {
    in_shape_ = input.shape();
    return input.reshaped({input.dim(0), input.size() / input.dim(0)});
  }

  Tensor<T> backward(const Tensor<T>& grad_output) override { return grad_output.reshaped(in_shape_); }

private:
  Shape in_shape_;
};

} // namespace facechannel
