#include "mtt/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace mtt {

EncoderParams init_encoder(const EncoderConfig& config, Rng& rng) {
  config.validate();
  EncoderParams p;
  std::size_t cin = config.input_c;
  for (const BackboneStage& stage : config.backbone) {
    const std::size_t k = config.kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(k * k * cin));
    std::vector<double> w(k * k * cin * stage.channels);
    for (double& v : w) v = rng.uniform(-bound, bound);
    p.stages.push_back(ConvStageParams{Tensor({k, k, cin, stage.channels}, std::move(w)),
                                       Tensor::zeros({stage.channels}), stage.stride});
    cin = stage.channels;
  }
  const double proj_bound = 1.0 / std::sqrt(static_cast<double>(cin));
  std::vector<double> proj(cin * config.d);
  for (double& v : proj) v = rng.uniform(-proj_bound, proj_bound);
  p.patch_proj = Tensor({cin, config.d}, std::move(proj));
  for (std::size_t i = 0; i < config.n_x; ++i)
    p.blocks.push_back(init_encoder_block(config.d, config.heads, rng));
  return p;
}

Tensor conv_backbone(const Tensor& image, const EncoderParams& params,
                     const EncoderConfig& config) {
  if (image.shape() != Shape{config.input_h, config.input_w, config.input_c})
    throw std::invalid_argument("conv_backbone: image shape " + shape_str(image.shape()) +
                                " does not match configured " +
                                shape_str({config.input_h, config.input_w, config.input_c}));
  Tensor h = image;
  for (const ConvStageParams& stage : params.stages)
    h = relu(conv2d(h, stage.w, stage.b, stage.stride, config.kernel / 2));
  return h;
}

Tensor project_patches(const Tensor& features, const Tensor& proj) {
  if (features.rank() != 3 || proj.rank() != 2 || features.shape()[2] != proj.shape()[0])
    throw std::invalid_argument("project_patches: incompatible shapes " +
                                shape_str(features.shape()) + " and " +
                                shape_str(proj.shape()));
  const std::size_t n = features.shape()[0] * features.shape()[1];
  return matmul(reshape(features, {n, features.shape()[2]}), proj);
}

Tensor encode_image(const Tensor& image, const EncoderParams& params,
                    const EncoderConfig& config) {
  Tensor features = conv_backbone(image, params, config);
  const std::size_t ph = features.shape()[0], pw = features.shape()[1];
  Tensor tokens = project_patches(features, params.patch_proj);
  tokens = add(tokens, sincos_positional_encoding(ph, pw, config.d));
  for (const EncoderBlockParams& block : params.blocks) tokens = encoder_block(tokens, block);
  return reshape(tokens, {ph, pw, config.d});
}

}  // namespace mtt
