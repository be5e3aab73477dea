#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mtt/rng.hpp"
#include "mtt/tensor.hpp"

namespace mtt::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

/// max_i |a_i - n_i| / max(|a_i| + |n_i|, floor); the floor turns the
/// comparison absolute where both gradients are tiny.
inline double max_rel_err(const Tensor& analytic, const Tensor& numeric,
                          double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric[i]), floor);
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Backward-vs-central-differences check of `op` at `x`, reducing the op
/// output with fixed random weights so asymmetric errors cannot cancel.
inline double grad_check(const std::function<Tensor(const Tensor&)>& op, const Tensor& x,
                         Rng& rng, double eps = 1e-5) {
  Tensor probe_out = op(x);
  std::vector<double> weights(probe_out.size());
  for (double& w : weights) w = rng.uniform(-1.0, 1.0);

  Tape tape;
  Tensor xt = x;
  tape.watch(xt);
  Tensor loss = sum(mul(op(xt), Tensor(probe_out.shape(), weights)));
  tape.backward(loss);
  Tensor analytic = tape.grad(xt);

  Tensor numeric = finite_diff_grad(
      [&op, &weights](const Tensor& probe) {
        Tensor out = op(probe);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weights[i];
        return acc;
      },
      x, eps);
  return max_rel_err(analytic, numeric);
}

}  // namespace mtt::test
