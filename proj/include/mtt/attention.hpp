#pragma once

#include "mtt/rng.hpp"
#include "mtt/tensor.hpp"

namespace mtt {

/// Query/key/value/output projections for multi-head attention. Heads are
/// column blocks: head h uses columns [h*dh, (h+1)*dh) of wq/wk/wv.
struct MhaParams {
  Tensor wq, wk, wv, wo;  // each d x d
  std::size_t heads = 1;
};

struct LayerNormParams {
  Tensor gain, bias;  // each d
};

/// Pre-norm transformer encoder block: x + MHSA(LN(x)), then + MLP(LN(.))
/// with a 2-layer relu MLP, d_ff = 4d.
struct EncoderBlockParams {
  MhaParams attn;
  LayerNormParams ln1, ln2;
  Tensor mlp_w1;  // d x 4d
  Tensor mlp_w2;  // 4d x d
};

MhaParams init_mha(std::size_t d, std::size_t heads, Rng& rng);
LayerNormParams init_layer_norm(std::size_t d);
EncoderBlockParams init_encoder_block(std::size_t d, std::size_t heads, Rng& rng);

/// Parameter-free cos-sin encoding over flattened row-major patch positions:
/// pe[pos][2i] = sin(pos / 10000^(2i/d)), pe[pos][2i+1] = cos(pos / 10000^(2i/d)).
/// d must be even.
Tensor sincos_positional_encoding(std::size_t h_patches, std::size_t w_patches,
                                  std::size_t d);

/// Scaled dot-product attention (scale 1/sqrt(d_h)), queries from `queries`,
/// keys/values from `context`; heads concatenated then output-projected.
Tensor multi_head_cross_attention(const Tensor& queries, const Tensor& context,
                                  const MhaParams& params);

Tensor multi_head_self_attention(const Tensor& x, const MhaParams& params);

/// Softmax attention weights of one head (inference-only diagnostic).
Tensor mha_attention_weights(const Tensor& queries, const Tensor& context,
                             const MhaParams& params, std::size_t head);

Tensor encoder_block(const Tensor& x, const EncoderBlockParams& params);

}  // namespace mtt
