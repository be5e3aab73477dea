#pragma once

#include "mtt/attention.hpp"
#include "mtt/config.hpp"
#include "mtt/tensor.hpp"

namespace mtt {

struct ConvStageParams {
  Tensor w;  // kh x kw x cin x cout
  Tensor b;  // cout
  std::size_t stride;
};

struct EncoderParams {
  std::vector<ConvStageParams> stages;
  Tensor patch_proj;  // c_out x d
  std::vector<EncoderBlockParams> blocks;
};

EncoderParams init_encoder(const EncoderConfig& config, Rng& rng);

/// Stride-s conv + relu stages over an H x W x C image in [0,1].
Tensor conv_backbone(const Tensor& image, const EncoderParams& params,
                     const EncoderConfig& config);

/// Shared linear map per patch (a 1x1 convolution); flattens the spatial
/// grid row-major to (h'*w') x d.
Tensor project_patches(const Tensor& features, const Tensor& proj);

/// conv_backbone -> project_patches -> + positional encoding -> n_x encoder
/// blocks; returns the h' x w' x d patch representation.
Tensor encode_image(const Tensor& image, const EncoderParams& params,
                    const EncoderConfig& config);

}  // namespace mtt
