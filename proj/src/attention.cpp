#include "mtt/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace mtt {

namespace {

Tensor uniform_init(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

void validate_mha(const Tensor& queries, const Tensor& context, const MhaParams& p) {
  if (queries.rank() != 2 || context.rank() != 2)
    throw std::invalid_argument("attention: expected rank-2 inputs, got " +
                                shape_str(queries.shape()) + " and " +
                                shape_str(context.shape()));
  const std::size_t d = queries.shape()[1];
  if (context.shape()[1] != d)
    throw std::invalid_argument("attention: query dim " + std::to_string(d) +
                                " != context dim " + std::to_string(context.shape()[1]));
  if (p.heads == 0 || d % p.heads != 0)
    throw std::invalid_argument("attention: d=" + std::to_string(d) +
                                " not divisible by heads=" + std::to_string(p.heads));
  for (const Tensor* w : {&p.wq, &p.wk, &p.wv, &p.wo})
    if (w->shape() != Shape{d, d})
      throw std::invalid_argument("attention: projection shape " + shape_str(w->shape()) +
                                  " does not match d=" + std::to_string(d));
}

}  // namespace

MhaParams init_mha(std::size_t d, std::size_t heads, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  MhaParams p;
  p.wq = uniform_init({d, d}, bound, rng);
  p.wk = uniform_init({d, d}, bound, rng);
  p.wv = uniform_init({d, d}, bound, rng);
  p.wo = uniform_init({d, d}, bound, rng);
  p.heads = heads;
  return p;
}

LayerNormParams init_layer_norm(std::size_t d) {
  return {Tensor::full({d}, 1.0), Tensor::zeros({d})};
}

EncoderBlockParams init_encoder_block(std::size_t d, std::size_t heads, Rng& rng) {
  EncoderBlockParams p;
  p.attn = init_mha(d, heads, rng);
  p.ln1 = init_layer_norm(d);
  p.ln2 = init_layer_norm(d);
  p.mlp_w1 = uniform_init({d, 4 * d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  p.mlp_w2 = uniform_init({4 * d, d}, 1.0 / std::sqrt(static_cast<double>(4 * d)), rng);
  return p;
}

Tensor sincos_positional_encoding(std::size_t h_patches, std::size_t w_patches,
                                  std::size_t d) {
  if (d % 2 != 0)
    throw std::invalid_argument("sincos_positional_encoding: d must be even, got " +
                                std::to_string(d));
  const std::size_t n = h_patches * w_patches;
  std::vector<double> pe(n * d);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t i = 0; i < d / 2; ++i) {
      const double freq =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      pe[pos * d + 2 * i] = std::sin(static_cast<double>(pos) * freq);
      pe[pos * d + 2 * i + 1] = std::cos(static_cast<double>(pos) * freq);
    }
  return Tensor({n, d}, std::move(pe));
}

Tensor multi_head_cross_attention(const Tensor& queries, const Tensor& context,
                                  const MhaParams& params) {
  validate_mha(queries, context, params);
  const std::size_t d = queries.shape()[1];
  const std::size_t dh = d / params.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    Tensor q = matmul(queries, slice(params.wq, 1, h * dh, (h + 1) * dh));
    Tensor k = matmul(context, slice(params.wk, 1, h * dh, (h + 1) * dh));
    Tensor v = matmul(context, slice(params.wv, 1, h * dh, (h + 1) * dh));
    Tensor weights = softmax(scale(matmul(q, transpose(k)), att_scale), 1);
    heads.push_back(matmul(weights, v));
  }
  return matmul(concat(heads, 1), params.wo);
}

Tensor multi_head_self_attention(const Tensor& x, const MhaParams& params) {
  return multi_head_cross_attention(x, x, params);
}

Tensor mha_attention_weights(const Tensor& queries, const Tensor& context,
                             const MhaParams& params, std::size_t head) {
  validate_mha(queries, context, params);
  if (head >= params.heads)
    throw std::invalid_argument("attention: head index out of range");
  const std::size_t d = queries.shape()[1];
  const std::size_t dh = d / params.heads;
  Tensor q = matmul(queries, slice(params.wq, 1, head * dh, (head + 1) * dh));
  Tensor k = matmul(context, slice(params.wk, 1, head * dh, (head + 1) * dh));
  return softmax(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh))), 1);
}

Tensor encoder_block(const Tensor& x, const EncoderBlockParams& params) {
  Tensor h = add(x, multi_head_self_attention(layer_norm(x, params.ln1.gain, params.ln1.bias),
                                              params.attn));
  Tensor m = matmul(relu(matmul(layer_norm(h, params.ln2.gain, params.ln2.bias),
                                params.mlp_w1)),
                    params.mlp_w2);
  return add(h, m);
}

}  // namespace mtt
