#include "mtt/loss.hpp"

#include <stdexcept>

namespace mtt {

std::array<double, kNumExpr> MultiTaskTarget::one_hot(std::size_t expr_class) {
  if (expr_class >= kNumExpr)
    throw std::invalid_argument("expr class " + std::to_string(expr_class) +
                                " out of range 0.." + std::to_string(kNumExpr - 1));
  std::array<double, kNumExpr> q{};
  q[expr_class] = 1.0;
  return q;
}

Tensor va_loss(const Tensor& v_hat, const std::array<double, 2>& va, double sigma2_va) {
  if (sigma2_va <= 0.0) throw std::invalid_argument("va_loss: sigma2_va must be positive");
  if (v_hat.shape() != Shape{2})
    throw std::invalid_argument("va_loss: expected 2 outputs, got " + shape_str(v_hat.shape()));
  Tensor diff = sub(v_hat, Tensor({2}, {va[0], va[1]}));
  return scale(mean(mul(diff, diff)), 1.0 / (2.0 * sigma2_va));
}

Tensor au_loss(const Tensor& u_au, const std::array<double, kNumAu>& au, double t_au) {
  if (t_au <= 0.0) throw std::invalid_argument("au_loss: t_au must be positive");
  if (u_au.shape() != Shape{kNumAu})
    throw std::invalid_argument("au_loss: expected " + std::to_string(kNumAu) +
                                " logits, got " + shape_str(u_au.shape()));
  Tensor target({kNumAu}, std::vector<double>(au.begin(), au.end()));
  Tensor z = scale(u_au, 1.0 / t_au);
  // BCE(z, y) = softplus(z) - y*z, elementwise, then mean over the 12 AUs.
  Tensor bce = sub(softplus(z), mul(z, target));
  return scale(mean(bce), 1.0 / (2.0 * t_au));
}

Tensor expr_loss_soft(const Tensor& u_expr, const std::array<double, kNumExpr>& q,
                      double t_expr) {
  if (t_expr <= 0.0) throw std::invalid_argument("expr_loss: t_expr must be positive");
  if (u_expr.shape() != Shape{kNumExpr})
    throw std::invalid_argument("expr_loss: expected " + std::to_string(kNumExpr) +
                                " logits, got " + shape_str(u_expr.shape()));
  Tensor weights({kNumExpr}, std::vector<double>(q.begin(), q.end()));
  Tensor log_probs = log_softmax(scale(u_expr, 1.0 / t_expr), 0);
  return scale(sum(mul(weights, log_probs)), -1.0 / t_expr);
}

Tensor expr_loss(const Tensor& u_expr, std::size_t expr_class, double t_expr) {
  return expr_loss_soft(u_expr, MultiTaskTarget::one_hot(expr_class), t_expr);
}

Tensor total_loss(const std::vector<std::pair<RawOutputs, MultiTaskTarget>>& batch,
                  const LossConfig& config) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  std::size_t total_present = 0;
  for (const auto& [raw, target] : batch) total_present += target.present_count();
  if (total_present == 0)
    throw std::invalid_argument("total_loss: no present labels in batch");

  if (config.reweight == ReweightMode::PerExample) {
    Tensor acc;
    std::size_t contributing = 0;
    for (const auto& [raw, target] : batch) {
      const std::size_t n_present = target.present_count();
      if (n_present == 0) continue;  // excluded from the mean
      Tensor example_loss;
      auto accumulate = [&example_loss](Tensor term) {
        example_loss = example_loss.defined() ? add(example_loss, term) : std::move(term);
      };
      if (target.va) accumulate(va_loss(raw.v_hat, *target.va, config.sigma2_va));
      if (target.au) accumulate(au_loss(raw.u_au, *target.au, config.t_au));
      if (target.expr) accumulate(expr_loss_soft(raw.u_expr, *target.expr, config.t_expr));
      example_loss = scale(example_loss, 1.0 / static_cast<double>(n_present));
      acc = acc.defined() ? add(acc, example_loss) : example_loss;
      ++contributing;
    }
    return scale(acc, 1.0 / static_cast<double>(contributing));
  }

  // PerTask: mean over present examples per task, summed across tasks.
  Tensor acc;
  auto accumulate_task = [&acc, &batch](auto present, auto term) {
    Tensor task_sum;
    std::size_t count = 0;
    for (const auto& example : batch) {
      if (!present(example.second)) continue;
      Tensor t = term(example);
      task_sum = task_sum.defined() ? add(task_sum, t) : std::move(t);
      ++count;
    }
    if (count == 0) return;
    Tensor task_mean = scale(task_sum, 1.0 / static_cast<double>(count));
    acc = acc.defined() ? add(acc, task_mean) : task_mean;
  };
  const LossConfig& cfg = config;
  accumulate_task([](const MultiTaskTarget& t) { return t.va.has_value(); },
                  [&cfg](const auto& e) { return va_loss(e.first.v_hat, *e.second.va, cfg.sigma2_va); });
  accumulate_task([](const MultiTaskTarget& t) { return t.au.has_value(); },
                  [&cfg](const auto& e) { return au_loss(e.first.u_au, *e.second.au, cfg.t_au); });
  accumulate_task([](const MultiTaskTarget& t) { return t.expr.has_value(); },
                  [&cfg](const auto& e) { return expr_loss_soft(e.first.u_expr, *e.second.expr, cfg.t_expr); });
  return acc;
}

}  // namespace mtt
