#pragma once

#include <array>

namespace casnav {

/// Stage-time fractions of the classical Runge-Kutta scheme.
inline constexpr std::array<double, 4> kRk4Nodes{0.0, 0.5, 0.5, 1.0};

/// One classical RK4 step. `rate(stage, x)` receives the stage index (0..3)
/// so that callers feeding sampled exogenous signals can pick the sample at
/// t + kRk4Nodes[stage] * h. State needs `x + y` and `double * x`.
template <class State, class Rate>
State rk4_step(const State& x, double h, Rate&& rate) {
  const State k1 = rate(0, x);
  const State k2 = rate(1, x + (0.5 * h) * k1);
  const State k3 = rate(2, x + (0.5 * h) * k2);
  const State k4 = rate(3, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace casnav
