#include <cmath>

#include "doctest.h"
#include "mtt/encoder.hpp"
#include "testutil.hpp"

using namespace mtt;
using mtt::test::max_rel_err;
using mtt::test::random_tensor;

TEST_CASE("three stride-2 stages turn 32x32 into a 4x4 grid") {
  EncoderConfig cfg;  // desk defaults
  CHECK(cfg.patches_h() == 4);
  CHECK(cfg.patches_w() == 4);
  Rng rng(1);
  EncoderParams p = init_encoder(cfg, rng);
  Tensor img = random_tensor({32, 32, 3}, rng, 0.0, 1.0);
  Tensor features = conv_backbone(img, p, cfg);
  CHECK(features.shape() == Shape{4, 4, 32});
}

TEST_CASE("zero conv weights give zero features") {
  EncoderConfig cfg;
  cfg.input_h = cfg.input_w = 8;
  cfg.input_c = 1;
  cfg.backbone = {{4, 2}};
  cfg.d = 4;
  cfg.heads = 2;
  cfg.n_x = 0;
  Rng rng(2);
  EncoderParams p = init_encoder(cfg, rng);
  p.stages[0].w = Tensor::zeros(p.stages[0].w.shape());
  p.stages[0].b = Tensor::zeros(p.stages[0].b.shape());
  Tensor img = random_tensor({8, 8, 1}, rng, 0.0, 1.0);
  Tensor features = conv_backbone(img, p, cfg);
  for (std::size_t i = 0; i < features.size(); ++i) CHECK(features[i] == 0.0);
}

TEST_CASE("backbone shape mismatch is rejected") {
  EncoderConfig cfg;
  Rng rng(3);
  EncoderParams p = init_encoder(cfg, rng);
  Tensor img = random_tensor({16, 16, 3}, rng, 0.0, 1.0);
  CHECK_THROWS_AS(conv_backbone(img, p, cfg), std::invalid_argument);
}

TEST_CASE("conv backbone gradient check on an 8x8x1 single stage") {
  EncoderConfig cfg;
  cfg.input_h = cfg.input_w = 8;
  cfg.input_c = 1;
  cfg.backbone = {{3, 2}};
  cfg.d = 4;
  cfg.heads = 2;
  cfg.n_x = 0;
  Rng rng(5);
  EncoderParams p = init_encoder(cfg, rng);
  Tensor img = random_tensor({8, 8, 1}, rng, 0.0, 1.0);

  Tape tape;
  tape.watch(p.stages[0].w);
  tape.backward(sum(conv_backbone(img, p, cfg)));
  Tensor analytic = tape.grad(p.stages[0].w);
  p.stages[0].w.detach();

  std::vector<double>& data = p.stages[0].w.mutable_data();
  std::vector<double> numeric(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + 1e-5;
    const double fp = sum(conv_backbone(img, p, cfg)).item();
    data[i] = orig - 1e-5;
    const double fm = sum(conv_backbone(img, p, cfg)).item();
    data[i] = orig;
    numeric[i] = (fp - fm) / 2e-5;
  }
  CHECK(max_rel_err(analytic, Tensor(p.stages[0].w.shape(), numeric)) < 1e-4);
}

TEST_CASE("project_patches with identity projection only flattens") {
  Rng rng(7);
  Tensor features = random_tensor({2, 2, 3}, rng);
  std::vector<double> eye(9, 0.0);
  eye[0] = eye[4] = eye[8] = 1.0;
  Tensor out = project_patches(features, Tensor({3, 3}, eye));
  CHECK(out.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == features[i]);
}

TEST_CASE("equal patch features map to equal projected rows") {
  Rng rng(9);
  Tensor proj = random_tensor({3, 5}, rng);
  std::vector<double> f(2 * 1 * 3);
  f[0] = f[3] = 0.4;
  f[1] = f[4] = -0.2;
  f[2] = f[5] = 0.9;
  Tensor out = project_patches(Tensor({2, 1, 3}, f), proj);
  for (std::size_t j = 0; j < 5; ++j) CHECK(out.at(0, j) == out.at(1, j));
}

TEST_CASE("paper-preset geometry: 7x7x2048 projects to 49x768") {
  TrainConfig paper = paper_config();
  CHECK(paper.encoder.patches_h() == 7);
  CHECK(paper.encoder.patches_w() == 7);
  CHECK(paper.encoder.backbone.back().channels == 2048);
  Rng rng(11);
  Tensor features = random_tensor({7, 7, 2048}, rng);
  Tensor proj = random_tensor({2048, 768}, rng);
  CHECK(project_patches(features, proj).shape() == Shape{49, 768});
}

TEST_CASE("encode_image with no attention blocks is features plus encoding") {
  EncoderConfig cfg;
  cfg.input_h = cfg.input_w = 8;
  cfg.input_c = 1;
  cfg.backbone = {{4, 2}};
  cfg.d = 4;
  cfg.heads = 2;
  cfg.n_x = 0;
  Rng rng(13);
  EncoderParams p = init_encoder(cfg, rng);
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  p.patch_proj = Tensor({4, 4}, eye);

  Tensor img = random_tensor({8, 8, 1}, rng, 0.0, 1.0);
  Tensor grid = encode_image(img, p, cfg);
  CHECK(grid.shape() == Shape{4, 4, 4});

  Tensor features = conv_backbone(img, p, cfg);
  Tensor pe = sincos_positional_encoding(4, 4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t k = 0; k < 4; ++k)
        CHECK(grid.at(y, x, k) ==
              doctest::Approx(features.at(y, x, k) + pe.at(y * 4 + x, k)).epsilon(1e-15));
}

TEST_CASE("encode_image desk shape and determinism") {
  EncoderConfig cfg;  // desk defaults
  Rng rng(17);
  EncoderParams p = init_encoder(cfg, rng);
  Tensor img = random_tensor({32, 32, 3}, rng, 0.0, 1.0);
  Tensor a = encode_image(img, p, cfg);
  Tensor b = encode_image(img, p, cfg);
  CHECK(a.shape() == Shape{4, 4, 32});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("without positional encoding the pipeline is permutation-equivariant") {
  // Composed from the public pieces, leaving the encoding out.
  EncoderConfig cfg;
  cfg.input_h = cfg.input_w = 8;
  cfg.input_c = 2;
  cfg.backbone = {{6, 2}, {6, 2}};
  cfg.d = 6;
  cfg.heads = 2;
  cfg.n_x = 1;
  Rng rng(19);
  EncoderParams p = init_encoder(cfg, rng);
  Tensor img = test::random_tensor({8, 8, 2}, rng, 0.0, 1.0);
  Tensor tokens = project_patches(conv_backbone(img, p, cfg), p.patch_proj);

  std::vector<std::size_t> perm = rng.permutation(4);
  std::vector<double> permuted(tokens.size());
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) permuted[i * 6 + j] = tokens.at(perm[i], j);

  Tensor a = encoder_block(Tensor({4, 6}, permuted), p.blocks[0]);
  Tensor b = encoder_block(tokens, p.blocks[0]);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(std::abs(a.at(i, j) - b.at(perm[i], j)) <= 1e-12);
}
