#pragma once

// Test-only central-difference oracle, kept separate from the library's
// grad_check so each can vouch for the other.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace xvqa::testing {

inline double numeric_derivative(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2 * h);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace xvqa::testing
