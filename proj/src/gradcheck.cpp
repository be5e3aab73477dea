#include "mtt/gradcheck.hpp"

#include <cmath>

#include "mtt/data.hpp"
#include "mtt/rng.hpp"

namespace mtt {

namespace {

double batch_loss(const Model& model,
                  const std::vector<std::pair<Tensor, MultiTaskTarget>>& batch,
                  const LossConfig& loss_config) {
  std::vector<std::pair<RawOutputs, MultiTaskTarget>> outputs;
  outputs.reserve(batch.size());
  for (const auto& [image, target] : batch)
    outputs.emplace_back(forward(image, model), target);
  return total_loss(outputs, loss_config).item();
}

}  // namespace

GradCheckResult gradcheck_model(Model& model,
                                const std::vector<std::pair<Tensor, MultiTaskTarget>>& batch,
                                const LossConfig& loss_config, double eps) {
  // Analytic gradients in one reverse sweep, collected before the
  // finite-difference loop re-evaluates the model without a tape.
  std::vector<std::pair<std::string, Tensor>> analytic_grads;
  {
    Tape tape;
    visit_params(model, [&tape](const std::string&, Tensor& p) { tape.watch(p); });
    std::vector<std::pair<RawOutputs, MultiTaskTarget>> outputs;
    for (const auto& [image, target] : batch)
      outputs.emplace_back(forward(image, model), target);
    tape.backward(total_loss(outputs, loss_config));
    visit_params(model, [&](const std::string& name, Tensor& p) {
      analytic_grads.emplace_back(name, tape.grad(p));
      p.detach();
    });
  }

  GradCheckResult result;
  std::size_t param_index = 0;
  visit_params(model, [&](const std::string& name, Tensor& p) {
    const Tensor& analytic = analytic_grads[param_index++].second;
    std::vector<double>& data = p.mutable_data();
    double worst = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double fp = batch_loss(model, batch, loss_config);
      data[i] = orig - eps;
      const double fm = batch_loss(model, batch, loss_config);
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric), 1e-3);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    result.per_param.emplace_back(name, worst);
    result.max_err = std::max(result.max_err, worst);
  });
  return result;
}

GradCheckResult run_gradcheck_suite(std::uint64_t seed) {
  const TrainConfig config = gradcheck_config();
  Rng rng(seed);
  Model model = init_model(config.encoder, config.head, rng);

  const std::size_t h = config.encoder.input_h, w = config.encoder.input_w,
                    c = config.encoder.input_c;
  std::vector<std::pair<Tensor, MultiTaskTarget>> batch;
  // Mixed presence masks: all three tasks, va+au, expr only.
  for (std::size_t i = 0; i < 3; ++i) {
    const std::uint64_t sub = splitmix64(seed ^ (0x1000 + i));
    const SyntheticLatents l = latents_from_seed(sub);
    MultiTaskTarget t;
    if (i != 2) t.va = l.va;
    if (i != 2) t.au = l.au;
    if (i == 0 || i == 2) t.expr = MultiTaskTarget::one_hot(l.expr_class);
    batch.emplace_back(render_synthetic_image(sub, h, w, c), t);
  }
  LossConfig loss_config{config.head.t_au, config.head.t_expr, config.head.sigma2_va,
                         ReweightMode::PerExample};
  return gradcheck_model(model, batch, loss_config);
}

}  // namespace mtt
