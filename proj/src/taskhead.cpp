#include "mtt/taskhead.hpp"

#include <cmath>
#include <stdexcept>

namespace mtt {

namespace {

TaskMlpParams init_task_mlp(std::size_t d, std::size_t n_d, std::size_t out_dim, Rng& rng) {
  TaskMlpParams p;
  std::size_t in = d;
  for (std::size_t i = 0; i < n_d; ++i) {
    const std::size_t out = (i + 1 == n_d) ? out_dim : d;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    p.layers.push_back(DenseParams{Tensor({in, out}, std::move(w)), Tensor::zeros({out})});
    in = out;
  }
  return p;
}

void visit_mha(const std::string& prefix, MhaParams& p,
               const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".wq", p.wq);
  fn(prefix + ".wk", p.wk);
  fn(prefix + ".wv", p.wv);
  fn(prefix + ".wo", p.wo);
}

void visit_ln(const std::string& prefix, LayerNormParams& p,
              const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".gain", p.gain);
  fn(prefix + ".bias", p.bias);
}

void visit_mlp(const std::string& prefix, TaskMlpParams& p,
               const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    fn(prefix + ".layer" + std::to_string(i) + ".weight", p.layers[i].w);
    fn(prefix + ".layer" + std::to_string(i) + ".bias", p.layers[i].b);
  }
}

}  // namespace

HeadParams init_head(const EncoderConfig& encoder_config, const HeadConfig& head_config,
                     Rng& rng) {
  head_config.validate();
  const std::size_t d = encoder_config.d;
  if (d % head_config.heads != 0)
    throw std::invalid_argument("init_head: d=" + std::to_string(d) +
                                " not divisible by head.heads=" +
                                std::to_string(head_config.heads));
  HeadParams p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> tok(3 * d);
  for (double& v : tok) v = rng.uniform(-bound, bound);
  p.tokens = Tensor({3, d}, std::move(tok));
  for (std::size_t i = 0; i < head_config.n_t; ++i) {
    TokenModuleParams m;
    m.ln_self = init_layer_norm(d);
    m.self_attn = init_mha(d, head_config.heads, rng);
    m.ln_cross = init_layer_norm(d);
    m.cross_attn = init_mha(d, head_config.heads, rng);
    p.modules.push_back(std::move(m));
  }
  p.va = init_task_mlp(d, head_config.n_d, 2, rng);
  p.au = init_task_mlp(d, head_config.n_d, kNumAu, rng);
  p.expr = init_task_mlp(d, head_config.n_d, kNumExpr, rng);
  return p;
}

Model init_model(const EncoderConfig& encoder_config, const HeadConfig& head_config,
                 Rng& rng) {
  Model m;
  m.encoder_config = encoder_config;
  m.head_config = head_config;
  m.encoder = init_encoder(encoder_config, rng);
  m.head = init_head(encoder_config, head_config, rng);
  return m;
}

Tensor token_module(const Tensor& tokens, const Tensor& patches,
                    const TokenModuleParams& params) {
  if (tokens.rank() != 2 || tokens.shape()[0] != 3)
    throw std::invalid_argument("token_module: expected 3 task tokens, got " +
                                shape_str(tokens.shape()));
  Tensor t = add(tokens, multi_head_self_attention(
                             layer_norm(tokens, params.ln_self.gain, params.ln_self.bias),
                             params.self_attn));
  return add(t, multi_head_cross_attention(
                    layer_norm(t, params.ln_cross.gain, params.ln_cross.bias), patches,
                    params.cross_attn));
}

Tensor task_mlp(const Tensor& token, const TaskMlpParams& params) {
  if (params.layers.empty()) throw std::invalid_argument("task_mlp: no layers");
  Tensor h = token.rank() == 1 ? reshape(token, {1, token.shape()[0]}) : token;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const DenseParams& layer = params.layers[i];
    h = add(matmul(h, layer.w), broadcast_to(layer.b, {h.shape()[0], layer.b.shape()[0]}));
    if (i + 1 < params.layers.size()) h = relu(h);
  }
  return reshape(h, {h.shape()[1]});
}

RawOutputs forward(const Tensor& image, const Model& model) {
  Tensor grid = encode_image(image, model.encoder, model.encoder_config);
  const std::size_t n = grid.shape()[0] * grid.shape()[1];
  Tensor patches = reshape(grid, {n, model.encoder_config.d});
  Tensor tokens = model.head.tokens;
  for (const TokenModuleParams& m : model.head.modules)
    tokens = token_module(tokens, patches, m);
  RawOutputs out;
  out.v_hat = task_mlp(reshape(slice(tokens, 0, kTokenVa, kTokenVa + 1),
                               {model.encoder_config.d}),
                       model.head.va);
  out.u_au = task_mlp(reshape(slice(tokens, 0, kTokenAu, kTokenAu + 1),
                              {model.encoder_config.d}),
                      model.head.au);
  out.u_expr = task_mlp(reshape(slice(tokens, 0, kTokenExpr, kTokenExpr + 1),
                                {model.encoder_config.d}),
                        model.head.expr);
  return out;
}

Predictions activate(const RawOutputs& raw, double t_au, double t_expr) {
  if (t_au <= 0.0 || t_expr <= 0.0)
    throw std::invalid_argument("activate: temperatures must be positive");
  Predictions p;
  p.v_hat = raw.v_hat;
  p.a_hat = sigmoid(scale(raw.u_au, 1.0 / t_au));
  p.e_hat = softmax(scale(raw.u_expr, 1.0 / t_expr), 0);
  return p;
}

void visit_params(Model& model, const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < model.encoder.stages.size(); ++i) {
    fn("backbone.stage" + std::to_string(i) + ".weight", model.encoder.stages[i].w);
    fn("backbone.stage" + std::to_string(i) + ".bias", model.encoder.stages[i].b);
  }
  fn("patch_proj", model.encoder.patch_proj);
  for (std::size_t i = 0; i < model.encoder.blocks.size(); ++i) {
    const std::string prefix = "encoder.block" + std::to_string(i);
    EncoderBlockParams& b = model.encoder.blocks[i];
    visit_ln(prefix + ".ln1", b.ln1, fn);
    visit_mha(prefix + ".attn", b.attn, fn);
    visit_ln(prefix + ".ln2", b.ln2, fn);
    fn(prefix + ".mlp.w1", b.mlp_w1);
    fn(prefix + ".mlp.w2", b.mlp_w2);
  }
  fn("tokens", model.head.tokens);
  for (std::size_t i = 0; i < model.head.modules.size(); ++i) {
    const std::string prefix = "token_module" + std::to_string(i);
    TokenModuleParams& m = model.head.modules[i];
    visit_ln(prefix + ".ln_self", m.ln_self, fn);
    visit_mha(prefix + ".self", m.self_attn, fn);
    visit_ln(prefix + ".ln_cross", m.ln_cross, fn);
    visit_mha(prefix + ".cross", m.cross_attn, fn);
  }
  visit_mlp("head.va", model.head.va, fn);
  visit_mlp("head.au", model.head.au, fn);
  visit_mlp("head.expr", model.head.expr, fn);
}

void visit_params(const Model& model,
                  const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_params(const_cast<Model&>(model),
               [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

}  // namespace mtt
