#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mtt/config.hpp"
#include "mtt/taskhead.hpp"
#include "mtt/tensor.hpp"

namespace mtt {

/// Per-example labels; an absent optional is a missing annotation. Expr is
/// stored as a distribution over the 8 classes so MixUp's soft labels and
/// plain one-hot labels go through the same path. AU entries may land in
/// [0,1] after MixUp.
struct MultiTaskTarget {
  std::optional<std::array<double, 2>> va;
  std::optional<std::array<double, kNumAu>> au;
  std::optional<std::array<double, kNumExpr>> expr;

  static std::array<double, kNumExpr> one_hot(std::size_t expr_class);
  std::size_t present_count() const {
    return (va ? 1u : 0u) + (au ? 1u : 0u) + (expr ? 1u : 0u);
  }
};

struct LossConfig {
  double t_au = 1.0;
  double t_expr = 5.0;
  double sigma2_va = 1.0;
  ReweightMode reweight = ReweightMode::PerExample;
};

/// (1 / (2 sigma^2)) * MSE over the two VA components.
Tensor va_loss(const Tensor& v_hat, const std::array<double, 2>& va, double sigma2_va);

/// (1 / (2 T)) * mean binary cross-entropy between sigmoid(u/T) and the 12
/// AU targets, evaluated in logit form.
Tensor au_loss(const Tensor& u_au, const std::array<double, kNumAu>& au, double t_au);

/// (1 / T) * categorical cross-entropy of softmax(u/T) against a hard class.
Tensor expr_loss(const Tensor& u_expr, std::size_t expr_class, double t_expr);

/// Soft-label generalization: -(sum_c q_c log softmax(u/T)_c) / T.
Tensor expr_loss_soft(const Tensor& u_expr, const std::array<double, kNumExpr>& q,
                      double t_expr);

/// Masked multi-task batch loss. PerExample: each example contributes the
/// mean of its present task losses, and the batch loss is the mean over
/// examples with at least one label. PerTask: per-task means over the
/// examples where that task is present, summed over tasks.
Tensor total_loss(const std::vector<std::pair<RawOutputs, MultiTaskTarget>>& batch,
                  const LossConfig& config);

}  // namespace mtt
