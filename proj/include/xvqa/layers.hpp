#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "xvqa/random.hpp"
#include "xvqa/tensor.hpp"

namespace xvqa {

/// Fills with uniform(-s, s), s = 1/sqrt(fan_in).
template <class T>
void init_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(-s, s));
}

enum class Mode { train, eval };

/// Mask entries are 0 or 1/(1-rate), so masked activations keep their
/// expected value.
template <class T>
Tensor<T> dropout_mask(const std::vector<std::size_t>& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  Tensor<T> mask(shape, T{1});
  if (rate == 0.0) return mask;
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (T& m : mask.values()) m = rng.uniform() < rate ? T{0} : keep;
  return mask;
}

template <class T>
Tensor<T> apply_dropout(const Tensor<T>& x, const Tensor<T>& mask, Mode mode = Mode::train) {
  if (mode == Mode::eval) return x;
  detail::require(x.same_shape(mask), "apply_dropout: mask shape mismatch");
  Tensor<T> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

/// Batch normalization over the rows of an N x D batch.
template <class T>
struct BatchNorm {
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t D)
      : gamma({D}, T{1}), beta({D}, T{0}), running_mean({D}, T{0}), running_var({D}, T{1}) {}

  std::size_t size() const { return gamma.size(); }

  struct Cache {
    Tensor<T> x_hat;
    std::vector<T> inv_std;
  };

  Tensor<T> forward_train(const Tensor<T>& x, Cache& cache, bool update_running = true) {
    detail::require(x.rank() == 2 && x.dim(1) == size(), "BatchNorm: batch width mismatch");
    const std::size_t N = x.dim(0), D = x.dim(1);
    cache.x_hat = Tensor<T>(x.shape());
    cache.inv_std.assign(D, T{0});
    Tensor<T> y(x.shape());
    for (std::size_t d = 0; d < D; ++d) {
      T mean = 0;
      for (std::size_t n = 0; n < N; ++n) mean += x(n, d);
      mean /= static_cast<T>(N);
      T var = 0;
      for (std::size_t n = 0; n < N; ++n) var += (x(n, d) - mean) * (x(n, d) - mean);
      var /= static_cast<T>(N);
      const T inv = T{1} / std::sqrt(var + static_cast<T>(epsilon));
      cache.inv_std[d] = inv;
      for (std::size_t n = 0; n < N; ++n) {
        cache.x_hat(n, d) = (x(n, d) - mean) * inv;
        y(n, d) = gamma[d] * cache.x_hat(n, d) + beta[d];
      }
      if (update_running) {
        const T m = static_cast<T>(momentum);
        running_mean[d] = (T{1} - m) * running_mean[d] + m * mean;
        const T unbiased = N > 1 ? var * static_cast<T>(N) / static_cast<T>(N - 1) : var;
        running_var[d] = (T{1} - m) * running_var[d] + m * unbiased;
      }
    }
    return y;
  }

  void forward_eval_inplace(std::span<T> x) const {
    for (std::size_t d = 0; d < size(); ++d) {
      x[d] = gamma[d] * (x[d] - running_mean[d]) / std::sqrt(running_var[d] + static_cast<T>(epsilon)) +
             beta[d];
    }
  }

  /// Returns dx; accumulates dgamma, dbeta.
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy, Tensor<T>& dgamma, Tensor<T>& dbeta) const {
    const std::size_t N = dy.dim(0), D = dy.dim(1);
    Tensor<T> dx(dy.shape());
    for (std::size_t d = 0; d < D; ++d) {
      T sum_dy = 0, sum_dy_xhat = 0;
      for (std::size_t n = 0; n < N; ++n) {
        sum_dy += dy(n, d);
        sum_dy_xhat += dy(n, d) * cache.x_hat(n, d);
      }
      dbeta[d] += sum_dy;
      dgamma[d] += sum_dy_xhat;
      const T scale = gamma[d] * cache.inv_std[d] / static_cast<T>(N);
      for (std::size_t n = 0; n < N; ++n) {
        dx(n, d) = scale * (static_cast<T>(N) * dy(n, d) - sum_dy - cache.x_hat(n, d) * sum_dy_xhat);
      }
    }
    return dx;
  }
};

}  // namespace xvqa
