#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "xvqa/tensor.hpp"

namespace xvqa {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moment tensors are created lazily on the first step
/// to match the parameter list handed in.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  AdamConfig& config() { return config_; }
  const AdamConfig& config() const { return config_; }
  std::uint64_t steps() const { return t_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }

  void step(std::span<Tensor<T>* const> params, std::span<Tensor<T>* const> grads) {
    detail::require(params.size() == grads.size(), "Adam::step: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (Tensor<T>* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    detail::require(m_.size() == params.size(), "Adam::step: parameter list changed between steps");
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = config_.learning_rate, eps = config_.epsilon;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& p = *params[i];
      const Tensor<T>& g = *grads[i];
      detail::require(p.same_shape(g) && p.same_shape(m_[i]), "Adam::step: shape mismatch");
      T* pm = m_[i].data();
      T* pv = v_[i].data();
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double gk = g[k];
        const double m = b1 * pm[k] + (1.0 - b1) * gk;
        const double v = b2 * pv[k] + (1.0 - b2) * gk * gk;
        pm[k] = static_cast<T>(m);
        pv[k] = static_cast<T>(v);
        const double update = lr * (m / c1) / (std::sqrt(v / c2) + eps);
        p[k] = static_cast<T>(p[k] - update);
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<Tensor<T>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace xvqa
