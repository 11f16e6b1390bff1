#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "xvqa/tensor.hpp"

namespace xvqa {

struct GradCheckResult {
  double max_relative_error = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// two_point: (L(p+e) - L(p-e)) / 2e.
/// four_point: (8[L(p+e) - L(p-e)] - [L(p+2e) - L(p-2e)]) / 12e, whose O(e^4)
/// truncation error permits a larger e and so less cancellation on tiny
/// gradients such as deep recurrent weights.
enum class Stencil { two_point, four_point };

/// Compares analytic gradients against central differences for every entry
/// of every parameter tensor. `loss` is evaluated with the parameters
/// perturbed in place and must be deterministic.
template <class T, class LossFn>
GradCheckResult grad_check(LossFn&& loss, std::span<Tensor<T>* const> params,
                           std::span<const Tensor<T>* const> analytic, double eps = 1e-5,
                           Stencil stencil = Stencil::two_point) {
  if (!(eps > 0)) throw std::invalid_argument("grad_check: eps must be positive");
  detail::require(params.size() == analytic.size(), "grad_check: parameter/gradient count mismatch");
  GradCheckResult r;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<T>& p = *params[t];
    detail::require(p.same_shape(*analytic[t]), "grad_check: gradient shape mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
      const T saved = p[k];
      auto at = [&](double h) {
        p[k] = static_cast<T>(saved + h);
        const double v = static_cast<double>(loss());
        p[k] = saved;
        if (!std::isfinite(v)) throw std::domain_error("grad_check: loss is not finite");
        return v;
      };
      const double d1 = at(eps) - at(-eps);
      const double numeric = stencil == Stencil::two_point
                                 ? d1 / (2.0 * eps)
                                 : (8.0 * d1 - (at(2 * eps) - at(-2 * eps))) / (12.0 * eps);
      const double a = static_cast<double>((*analytic[t])[k]);
      const double err = relative_error(a, numeric);
      ++r.checked;
      if (err > r.max_relative_error) {
        r.max_relative_error = err;
        r.worst_tensor = t;
        r.worst_index = k;
        r.worst_analytic = a;
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace xvqa
