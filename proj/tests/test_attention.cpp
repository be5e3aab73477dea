#include <cmath>

#include "doctest.h"
#include "mtt/attention.hpp"
#include "testutil.hpp"

using namespace mtt;
using mtt::test::max_rel_err;
using mtt::test::random_tensor;

namespace {

// Independent scalar-loop attention used as the oracle: plain loops, no
// shared code with the production kernels.
std::vector<double> scalar_attention(const std::vector<double>& queries, std::size_t t,
                                     const std::vector<double>& context, std::size_t n,
                                     std::size_t d, const MhaParams& p) {
  const std::size_t heads = p.heads;
  const std::size_t dh = d / heads;
  auto proj = [d](const std::vector<double>& x, std::size_t rows, const Tensor& w,
                  std::size_t col0, std::size_t cols) {
    std::vector<double> out(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t k = 0; k < d; ++k)
          out[i * cols + j] += x[i * d + k] * w.at(k, col0 + j);
    return out;
  };
  std::vector<double> concat(t * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    auto q = proj(queries, t, p.wq, h * dh, dh);
    auto k = proj(context, n, p.wk, h * dh, dh);
    auto v = proj(context, n, p.wv, h * dh, dh);
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> scores(n, 0.0);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t a = 0; a < dh; ++a)
          scores[j] += q[i * dh + a] * k[j * dh + a];
        scores[j] /= std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, scores[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        z += scores[j];
      }
      for (std::size_t j = 0; j < n; ++j) scores[j] /= z;
      for (std::size_t a = 0; a < dh; ++a) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += scores[j] * v[j * dh + a];
        concat[i * d + h * dh + a] = acc;
      }
    }
  }
  std::vector<double> out(t * d, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k)
        out[i * d + j] += concat[i * d + k] * p.wo.at(k, j);
  return out;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.at(perm[i], j);
  return Tensor({n, d}, std::move(out));
}

}  // namespace

TEST_CASE("positional encoding formula") {
  Tensor pe = sincos_positional_encoding(2, 2, 8);
  CHECK(pe.shape() == Shape{4, 8});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pe.at(0, 2 * i) == 0.0);      // sin 0
    CHECK(pe.at(0, 2 * i + 1) == 1.0);  // cos 0
  }
  CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(pe.at(1, 0) == doctest::Approx(0.841471).epsilon(1e-6));
  // frequency decays with the slot index
  CHECK(pe.at(1, 2) == doctest::Approx(std::sin(std::pow(10000.0, -2.0 / 8.0))).epsilon(1e-12));
  CHECK_THROWS_AS(sincos_positional_encoding(2, 2, 7), std::invalid_argument);
}

TEST_CASE("single-key attention degenerates to projected value") {
  Rng rng(41);
  const std::size_t d = 6;
  MhaParams p = init_mha(d, 2, rng);
  Tensor x = random_tensor({1, d}, rng);
  Tensor out = multi_head_self_attention(x, p);
  // weights are [1], so output = (x Wv) Wo
  Tensor expect = matmul(matmul(x, p.wv), p.wo);
  for (std::size_t i = 0; i < d; ++i)
    CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  Tensor w = mha_attention_weights(x, x, p, 0);
  CHECK(w.size() == 1);
  CHECK(w[0] == 1.0);
}

TEST_CASE("self-attention is permutation-equivariant") {
  Rng rng(43);
  const std::size_t n = 5, d = 8;
  MhaParams p = init_mha(d, 2, rng);
  Tensor x = random_tensor({n, d}, rng);
  std::vector<std::size_t> perm = rng.permutation(n);
  Tensor a = multi_head_self_attention(permute_rows(x, perm), p);
  Tensor b = permute_rows(multi_head_self_attention(x, p), perm);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
}

TEST_CASE("cross-attention is invariant to context permutation") {
  Rng rng(47);
  const std::size_t t = 3, n = 7, d = 8;
  MhaParams p = init_mha(d, 4, rng);
  Tensor q = random_tensor({t, d}, rng);
  Tensor ctx = random_tensor({n, d}, rng);
  std::vector<std::size_t> perm = rng.permutation(n);
  Tensor a = multi_head_cross_attention(q, ctx, p);
  Tensor b = multi_head_cross_attention(q, permute_rows(ctx, perm), p);
  CHECK(a.shape() == Shape{t, d});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
}

TEST_CASE("attention weight rows sum to one") {
  Rng rng(53);
  MhaParams p = init_mha(8, 2, rng);
  Tensor q = random_tensor({4, 8}, rng, -3.0, 3.0);
  Tensor ctx = random_tensor({9, 8}, rng, -3.0, 3.0);
  for (std::size_t h = 0; h < 2; ++h) {
    Tensor w = mha_attention_weights(q, ctx, p, h);
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 9; ++j) total += w.at(i, j);
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("attention matches the scalar-loop oracle") {
  Rng rng(59);
  SUBCASE("self-attention, n=2 d=2 h=1") {
    MhaParams p = init_mha(2, 1, rng);
    Tensor x = random_tensor({2, 2}, rng);
    Tensor out = multi_head_self_attention(x, p);
    auto ref = scalar_attention(x.data(), 2, x.data(), 2, 2, p);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  SUBCASE("cross-attention, t=1 n=2 d=2 h=1") {
    MhaParams p = init_mha(2, 1, rng);
    Tensor q = random_tensor({1, 2}, rng);
    Tensor ctx = random_tensor({2, 2}, rng);
    Tensor out = multi_head_cross_attention(q, ctx, p);
    auto ref = scalar_attention(q.data(), 1, ctx.data(), 2, 2, p);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  SUBCASE("multi-head case, t=3 n=4 d=8 h=2") {
    MhaParams p = init_mha(8, 2, rng);
    Tensor q = random_tensor({3, 8}, rng);
    Tensor ctx = random_tensor({4, 8}, rng);
    Tensor out = multi_head_cross_attention(q, ctx, p);
    auto ref = scalar_attention(q.data(), 3, ctx.data(), 4, 8, p);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("attention rejects mismatched shapes") {
  Rng rng(61);
  MhaParams p = init_mha(8, 2, rng);
  Tensor q = random_tensor({2, 6}, rng);
  Tensor ctx = random_tensor({3, 8}, rng);
  CHECK_THROWS_AS(multi_head_cross_attention(q, ctx, p), std::invalid_argument);
  MhaParams bad = p;
  bad.heads = 3;  // 8 % 3 != 0
  Tensor x = random_tensor({2, 8}, rng);
  CHECK_THROWS_AS(multi_head_self_attention(x, bad), std::invalid_argument);
}

TEST_CASE("encoder block is the identity under zero output weights") {
  Rng rng(67);
  const std::size_t d = 8;
  EncoderBlockParams p = init_encoder_block(d, 2, rng);
  p.attn.wo = Tensor::zeros({d, d});
  p.mlp_w2 = Tensor::zeros({4 * d, d});
  Tensor x = random_tensor({5, d}, rng);
  Tensor out = encoder_block(x, p);
  CHECK(out.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("encoder block parameters pass finite-difference checks") {
  Rng rng(71);
  const std::size_t d = 8;
  EncoderBlockParams p = init_encoder_block(d, 2, rng);
  Tensor x = random_tensor({3, d}, rng);

  auto loss_value = [&]() { return sum(encoder_block(x, p)).item(); };
  auto check_param = [&](Tensor& param) {
    Tape tape;
    tape.watch(param);
    tape.backward(sum(encoder_block(x, p)));
    Tensor analytic = tape.grad(param);
    param.detach();
    std::vector<double>& data = param.mutable_data();
    std::vector<double> numeric(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + 1e-5;
      const double fp = loss_value();
      data[i] = orig - 1e-5;
      const double fm = loss_value();
      data[i] = orig;
      numeric[i] = (fp - fm) / 2e-5;
    }
    CHECK(max_rel_err(analytic, Tensor(param.shape(), numeric)) < 1e-4);
  };

  check_param(p.attn.wq);
  check_param(p.attn.wo);
  check_param(p.ln1.gain);
  check_param(p.ln2.bias);
  check_param(p.mlp_w1);
  check_param(p.mlp_w2);
}
