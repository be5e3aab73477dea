#include "mtt/trainer.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <stdexcept>

#include "mtt/rng.hpp"

namespace mtt {

namespace {

constexpr std::uint64_t kInitSalt = 0x696e69745f726e67ULL;
constexpr std::uint64_t kDataSalt = 0x646174615f726e67ULL;

void apply_update(Model& model, Tape& tape, OptState& state, const OptimizerConfig& opt) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  visit_params(model, [&](const std::string& name, Tensor& p) {
    const Tensor g = tape.grad(p);
    std::vector<double>& pd = p.mutable_data();
    if (opt.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < pd.size(); ++i) pd[i] -= opt.lr * g[i];
      return;
    }
    std::vector<double>& m = state.m[name];
    std::vector<double>& v = state.v[name];
    if (m.empty()) m.assign(pd.size(), 0.0);
    if (v.empty()) v.assign(pd.size(), 0.0);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t i = 0; i < pd.size(); ++i) {
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      pd[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  });
}

}  // namespace

std::optional<double> train_step(Model& model,
                                 const std::vector<std::pair<Tensor, MultiTaskTarget>>& batch,
                                 OptState& state, const TrainConfig& config) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  std::size_t present = 0;
  for (const auto& [image, target] : batch) present += target.present_count();
  if (present == 0) {
    std::cerr << "warning: batch carries no labels, skipping update\n";
    return std::nullopt;
  }

  Tape tape;
  visit_params(model, [&tape](const std::string&, Tensor& p) { tape.watch(p); });

  std::vector<std::pair<RawOutputs, MultiTaskTarget>> outputs;
  outputs.reserve(batch.size());
  for (const auto& [image, target] : batch)
    outputs.emplace_back(forward(image, model), target);

  LossConfig loss_cfg{config.head.t_au, config.head.t_expr, config.head.sigma2_va,
                      config.reweight};
  Tensor loss = total_loss(outputs, loss_cfg);
  tape.backward(loss);
  apply_update(model, tape, state, config.opt);
  // The tape dies with this frame; parameters must not keep nodes into it.
  visit_params(model, [](const std::string&, Tensor& p) { p.detach(); });
  return loss.item();
}

TrainResult train_loop(const TrainConfig& config_in, const std::vector<DatasetExample>& dataset,
                       std::ostream* log) {
  TrainConfig config = config_in;
  if (const char* env_seed = std::getenv("MTTOKEN_SEED"))
    config.seed = std::strtoull(env_seed, nullptr, 10);
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train_loop: empty dataset");

  Rng init_rng(splitmix64(config.seed ^ kInitSalt));
  Rng data_rng(splitmix64(config.seed ^ kDataSalt));
  TrainResult result;
  result.model = init_model(config.encoder, config.head, init_rng);
  OptState state;

  const std::size_t h = config.encoder.input_h, w = config.encoder.input_w,
                    c = config.encoder.input_c;
  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<std::pair<Tensor, MultiTaskTarget>> batch;
    batch.reserve(config.batch);
    for (std::size_t b = 0; b < config.batch; ++b) {
      const DatasetExample& ex = dataset[data_rng.index(dataset.size())];
      Tensor image = load_image(ex.image, h, w, c);
      if (config.augment) image = affine_augment(image, data_rng);
      batch.emplace_back(std::move(image), ex.target);
    }
    if (config.mixup_alpha > 0.0 && batch.size() >= 2)
      batch = mixup_batch(batch, config.mixup_alpha, data_rng);

    std::optional<double> loss = train_step(result.model, batch, state, config);
    if (loss) result.loss_trace.push_back(*loss);
    if (log && (step % config.log_every == 0 || step + 1 == config.steps)) {
      (*log) << "step " << step << " loss ";
      if (loss)
        (*log) << *loss;
      else
        (*log) << "skipped";
      (*log) << std::endl;
    }
  }
  return result;
}

std::vector<FrameRecord> predict_dataset(const Model& model,
                                         const std::vector<DatasetExample>& dataset) {
  std::vector<FrameRecord> out;
  out.reserve(dataset.size());
  const EncoderConfig& e = model.encoder_config;
  for (const DatasetExample& ex : dataset) {
    Tensor image = load_image(ex.image, e.input_h, e.input_w, e.input_c);
    RawOutputs raw = forward(image, model);
    FrameRecord r;
    r.video_id = ex.video_id;
    r.frame_index = ex.frame_index;
    r.v = {raw.v_hat[0], raw.v_hat[1]};
    for (std::size_t k = 0; k < kNumAu; ++k) r.u_au[k] = raw.u_au[k];
    for (std::size_t k = 0; k < kNumExpr; ++k) r.u_expr[k] = raw.u_expr[k];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mtt
