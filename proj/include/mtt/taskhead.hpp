#pragma once

#include <functional>
#include <string>

#include "mtt/attention.hpp"
#include "mtt/config.hpp"
#include "mtt/encoder.hpp"
#include "mtt/tensor.hpp"

namespace mtt {

// Fixed task-token order, also the checkpoint layout order.
inline constexpr std::size_t kTokenVa = 0;
inline constexpr std::size_t kTokenAu = 1;
inline constexpr std::size_t kTokenExpr = 2;
inline constexpr std::size_t kNumAu = 12;
inline constexpr std::size_t kNumExpr = 8;

/// One token module: residual self-attention between the 3 task tokens, then
/// residual cross-attention with the patches as context. Pre-norm, no MLP
/// sub-blocks.
struct TokenModuleParams {
  LayerNormParams ln_self;
  MhaParams self_attn;
  LayerNormParams ln_cross;
  MhaParams cross_attn;
};

struct DenseParams {
  Tensor w;  // in x out
  Tensor b;  // out
};

/// (n_d - 1) relu layers then one linear layer, separate weights per task.
struct TaskMlpParams {
  std::vector<DenseParams> layers;
};

struct HeadParams {
  Tensor tokens;  // 3 x d, rows VA / AU / EXPR
  std::vector<TokenModuleParams> modules;
  TaskMlpParams va, au, expr;
};

struct Model {
  EncoderConfig encoder_config;
  HeadConfig head_config;
  EncoderParams encoder;
  HeadParams head;
};

struct RawOutputs {
  Tensor v_hat;   // 2
  Tensor u_au;    // 12
  Tensor u_expr;  // 8
};

struct Predictions {
  Tensor v_hat;  // 2, passed through
  Tensor a_hat;  // 12, sigmoid(u_au / t_au)
  Tensor e_hat;  // 8, softmax(u_expr / t_expr)
};

HeadParams init_head(const EncoderConfig& encoder_config, const HeadConfig& head_config,
                     Rng& rng);
Model init_model(const EncoderConfig& encoder_config, const HeadConfig& head_config,
                 Rng& rng);

Tensor token_module(const Tensor& tokens, const Tensor& patches,
                    const TokenModuleParams& params);

Tensor task_mlp(const Tensor& token, const TaskMlpParams& params);

/// Full forward pass: encode_image -> n_t token modules -> three task MLPs.
RawOutputs forward(const Tensor& image, const Model& model);

/// Temperature-scaled activations; v_hat passes through unchanged.
Predictions activate(const RawOutputs& raw, double t_au, double t_expr);

/// Calls fn(name, tensor) for every trainable tensor in a stable order; the
/// order defines the checkpoint layout.
void visit_params(Model& model, const std::function<void(const std::string&, Tensor&)>& fn);
void visit_params(const Model& model,
                  const std::function<void(const std::string&, const Tensor&)>& fn);

}  // namespace mtt
