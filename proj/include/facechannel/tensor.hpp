#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace facechannel {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

inline std::size_t shape_numel(const Shape& s) {
  if (s.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

} // namespace detail

/// Dense row-major N-dimensional array. Deep value semantics; an operation
/// never aliases its inputs. Index (i0,...,ik) lives at flat offset
/// i0*stride0 + ... + ik with strides derived from the shape.
template <typename T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(detail::shape_numel(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (detail::shape_numel(shape_) != data_.size()) {
      throw std::invalid_argument("tensor: shape " + shape_to_string(shape_) + " holds " +
                                  std::to_string(detail::shape_numel(shape_)) + " values, got " +
                                  std::to_string(data_.size()));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size())
      throw std::invalid_argument("tensor: index rank mismatch for shape " + shape_to_string(shape_));
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[axis])
        throw std::out_of_range("tensor: index out of range on axis " + std::to_string(axis));
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  T& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  const T& at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

  /// Same data, new shape. Element count must be preserved.
  Tensor reshaped(Shape new_shape) const {
    if (detail::shape_numel(new_shape) != data_.size())
      throw std::invalid_argument("reshape: " + shape_to_string(shape_) + " to " +
                                  shape_to_string(new_shape) + " changes element count");
    return Tensor(std::move(new_shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
  void validate_shape() const {
    for (std::size_t d : shape_)
      if (d == 0)
        throw std::invalid_argument("tensor: dimensions must be positive, got " + shape_to_string(shape_));
  }

  Shape shape_;
  std::vector<T> data_;
};

namespace detail {

/// C[m,n] (+)= A[m,k] * B[k,n]. For every output element the k terms fold in
/// ascending order, so results are reproducible run to run within a build.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate = false) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      const T* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

template <typename T>
void check_binary_shapes(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                " vs " + shape_to_string(b.shape()));
}

} // namespace detail

// ---- Pointwise arithmetic. Binary forms require equal shapes; each has a
// ---- scalar right-hand overload. div and log enforce their domains.

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_binary_shapes("add", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s;
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_binary_shapes("sub", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - s;
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_binary_shapes("mul", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_binary_shapes("div", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] == T(0))
      throw std::domain_error("div: zero divisor at index " + std::to_string(i));
    out[i] = a[i] / b[i];
  }
  return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, T s) {
  if (s == T(0)) throw std::domain_error("div: zero scalar divisor");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / s;
  return out;
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_binary_shapes("max", a, b);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > b[i] ? a[i] : b[i];
  return out;
}

template <typename T>
Tensor<T> maximum(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > s ? a[i] : s;
  return out;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
  return out;
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] > T(0)))
      throw std::domain_error("log: non-positive value at index " + std::to_string(i));
    out[i] = std::log(a[i]);
  }
  return out;
}

/// Standard matrix product of rank-2 tensors [m,k] x [k,n] -> [m,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: expects rank-2 tensors, got " + shape_to_string(a.shape()) +
                                " and " + shape_to_string(b.shape()));
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_to_string(a.shape()) +
                                " x " + shape_to_string(b.shape()));
  Tensor<T> out({a.dim(0), b.dim(1)});
  detail::gemm(a.data(), b.data(), out.data(), a.dim(0), a.dim(1), b.dim(1));
  return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.rank() != 2)
    throw std::invalid_argument("transpose2d: expects rank-2 tensor, got " + shape_to_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

struct ConvGeom {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
};

inline ConvGeom conv_output_geometry(const char* op, std::size_t h, std::size_t w, int kh, int kw,
                                     int stride, int pad) {
  if (kh < 1 || kw < 1) throw std::invalid_argument(std::string(op) + ": kernel dims must be >= 1");
  if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
  if (pad < 0) throw std::invalid_argument(std::string(op) + ": padding must be >= 0");
  const long long oh = (static_cast<long long>(h) + 2LL * pad - kh) / stride + 1;
  const long long ow = (static_cast<long long>(w) + 2LL * pad - kw) / stride + 1;
  if (oh < 1 || ow < 1)
    throw std::invalid_argument(std::string(op) + ": non-positive output size Hout=" +
                                std::to_string(oh) + ", Wout=" + std::to_string(ow));
  return {static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
}

/// Lower a [C,H,W] image to patch columns [C*kh*kw, Hout*Wout]. Column j is
/// the receptive field of output position j, zero where the window overhangs
/// the padded border.
template <typename T>
Tensor<T> im2col(const Tensor<T>& input, int kh, int kw, int stride, int pad) {
  if (input.rank() != 3)
    throw std::invalid_argument("im2col: expects [C,H,W], got " + shape_to_string(input.shape()));
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const ConvGeom g = conv_output_geometry("im2col", h, w, kh, kw, stride, pad);
  Tensor<T> out({c * static_cast<std::size_t>(kh) * static_cast<std::size_t>(kw), g.out_h * g.out_w});
  const T* in = input.data();
  T* o = out.data();
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const std::size_t row = (ch * kh + ki) * kw + kj;
        T* orow = o + row * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long long iy = static_cast<long long>(oy) * stride + ki - pad;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long long ix = static_cast<long long>(ox) * stride + kj - pad;
            T v = T(0);
            if (iy >= 0 && iy < static_cast<long long>(h) && ix >= 0 && ix < static_cast<long long>(w))
              v = in[(ch * h + iy) * w + ix];
            orow[oy * g.out_w + ox] = v;
          }
        }
      }
    }
  }
  return out;
}

/// Adjoint of im2col: scatter-add patch columns back onto a [C,H,W] grid.
template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, std::size_t c, std::size_t h, std::size_t w, int kh, int kw,
                 int stride, int pad) {
  const ConvGeom g = conv_output_geometry("col2im", h, w, kh, kw, stride, pad);
  const std::size_t ncols = g.out_h * g.out_w;
  if (cols.rank() != 2 || cols.dim(0) != c * static_cast<std::size_t>(kh) * static_cast<std::size_t>(kw) ||
      cols.dim(1) != ncols)
    throw std::invalid_argument("col2im: column tensor " + shape_to_string(cols.shape()) +
                                " does not match geometry");
  Tensor<T> out({c, h, w});
  const T* in = cols.data();
  T* o = out.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const std::size_t row = (ch * kh + ki) * kw + kj;
        const T* irow = in + row * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long long iy = static_cast<long long>(oy) * stride + ki - pad;
          if (iy < 0 || iy >= static_cast<long long>(h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long long ix = static_cast<long long>(ox) * stride + kj - pad;
            if (ix < 0 || ix >= static_cast<long long>(w)) continue;
            o[(ch * h + iy) * w + ix] += irow[oy * g.out_w + ox];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
T sum(const Tensor<T>& a) {
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(static_cast<double>(a[i]))) return false;
  return true;
}

} // namespace facechannel
