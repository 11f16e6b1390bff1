#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace xvqa {

/// Thrown whenever operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array. The element count always equals the product of
/// the shape dimensions, and every dimension is positive.
template <class T = double>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T{0})
      : shape_(std::move(shape)) {
    data_.assign(checked_count(shape_), fill);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_count(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }

  static Tensor vector(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * shape_[1], shape_[1]); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * shape_[1], shape_[1]);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  bool operator==(const Tensor& other) const = default;

 private:
  static std::size_t checked_count(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
      n *= d;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// out[k] = sum_d W[k,d] x[d] + b[k]
template <class T>
void affine_into(std::span<const T> x, const Tensor<T>& W, const Tensor<T>& b, std::span<T> out) {
  const std::size_t K = W.dim(0), D = W.dim(1);
  const T* w = W.data();
  for (std::size_t k = 0; k < K; ++k) {
    const T* wr = w + k * D;
    T acc = b[k];
    for (std::size_t d = 0; d < D; ++d) acc += wr[d] * x[d];
    out[k] = acc;
  }
}

// dW += dy x^T, db += dy, dx (optional) += W^T dy
template <class T>
void affine_backward_accumulate(std::span<const T> x, const Tensor<T>& W, std::span<const T> dy,
                                std::span<T> dx, Tensor<T>& dW, Tensor<T>& db) {
  const std::size_t K = W.dim(0), D = W.dim(1);
  const T* w = W.data();
  T* gw = dW.data();
  for (std::size_t k = 0; k < K; ++k) {
    const T g = dy[k];
    db[k] += g;
    if (g == T{0}) continue;
    T* gr = gw + k * D;
    const T* wr = w + k * D;
    for (std::size_t d = 0; d < D; ++d) gr[d] += g * x[d];
    if (!dx.empty()) {
      for (std::size_t d = 0; d < D; ++d) dx[d] += g * wr[d];
    }
  }
}

template <class T>
void softmax_inplace(std::span<T> v) {
  const T mx = *std::max_element(v.begin(), v.end());
  T sum = 0;
  for (T& e : v) {
    e = std::exp(e - mx);
    sum += e;
  }
  for (T& e : v) e /= sum;
}

}  // namespace detail

template <class T>
T sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

/// W x + b for x of length D, W of shape K x D and b of length K.
template <class T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
  detail::require(W.rank() == 2 && x.rank() == 1 && b.rank() == 1,
                  "affine: expected x[D], W[KxD], b[K]");
  detail::require(W.dim(1) == x.size(), "affine: W " + shape_string(W.shape()) +
                                            " does not accept x " + shape_string(x.shape()));
  detail::require(W.dim(0) == b.size(), "affine: W " + shape_string(W.shape()) +
                                            " does not match b " + shape_string(b.shape()));
  Tensor<T> out({W.dim(0)});
  detail::affine_into<T>(x.values(), W, b, out.values());
  return out;
}

template <class T>
struct AffineGrad {
  Tensor<T> dx;
  Tensor<T> dW;
  Tensor<T> db;
};

template <class T>
AffineGrad<T> affine_backward(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& dy) {
  detail::require(W.rank() == 2 && W.dim(1) == x.size() && W.dim(0) == dy.size(),
                  "affine_backward: shape mismatch");
  AffineGrad<T> g{Tensor<T>({x.size()}), Tensor<T>(W.shape()), Tensor<T>({W.dim(0)})};
  detail::affine_backward_accumulate<T>(x.values(), W, dy.values(), g.dx.values(), g.dW, g.db);
  return g;
}

template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.empty()) throw ShapeError("softmax: empty input");
  Tensor<T> out = logits;
  detail::softmax_inplace(out.values());
  return out;
}

template <class T>
struct LossAndGrad {
  T loss{};
  Tensor<T> grad;
};

/// Element-wise sigmoid cross entropy summed over entries. Computed in
/// logit form: max(z,0) - z*y + log(1 + exp(-|z|)).
template <class T>
LossAndGrad<T> sigmoid_cross_entropy(const Tensor<T>& logits, const Tensor<T>& y) {
  detail::require(logits.same_shape(y), "sigmoid_cross_entropy: logits " +
                                            shape_string(logits.shape()) + " vs labels " +
                                            shape_string(y.shape()));
  LossAndGrad<T> r{T{0}, Tensor<T>(logits.shape())};
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const T z = logits[j];
    const T t = y[j];
    if (t != T{0} && t != T{1}) throw std::invalid_argument("sigmoid_cross_entropy: labels must be 0 or 1");
    r.loss += std::max(z, T{0}) - z * t + std::log1p(std::exp(-std::abs(z)));
    r.grad[j] = sigmoid(z) - t;
  }
  return r;
}

/// Batched form over an N x V logit matrix; the loss and gradient are
/// averaged over the N rows.
template <class T>
LossAndGrad<T> sigmoid_cross_entropy_batch(const Tensor<T>& logits, const Tensor<T>& y) {
  detail::require(logits.rank() == 2 && logits.same_shape(y),
                  "sigmoid_cross_entropy_batch: expected matching N x V tensors");
  LossAndGrad<T> r = sigmoid_cross_entropy(Tensor<T>({logits.size()}, logits.storage()),
                                           Tensor<T>({y.size()}, y.storage()));
  const T n = static_cast<T>(logits.dim(0));
  r.loss /= n;
  for (T& g : r.grad.values()) g /= n;
  r.grad = Tensor<T>(logits.shape(), r.grad.storage());
  return r;
}

/// -log softmax(logits)[target]
template <class T>
LossAndGrad<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t target) {
  if (logits.empty()) throw ShapeError("softmax_cross_entropy: empty logits");
  if (target >= logits.size()) {
    throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(target) +
                            " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const T mx = *std::max_element(logits.values().begin(), logits.values().end());
  T sum = 0;
  for (T z : logits.values()) sum += std::exp(z - mx);
  const T log_z = mx + std::log(sum);
  LossAndGrad<T> r{log_z - logits[target], Tensor<T>(logits.shape())};
  for (std::size_t k = 0; k < logits.size(); ++k) r.grad[k] = std::exp(logits[k] - log_z);
  r.grad[target] -= T{1};
  return r;
}

}  // namespace xvqa
