#include <cmath>

#include "doctest.h"
#include "mtt/tensor.hpp"
#include "testutil.hpp"

using namespace mtt;
using mtt::test::grad_check;
using mtt::test::max_rel_err;
using mtt::test::random_tensor;

TEST_CASE("tensor construction enforces shape and finiteness") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::domain_error);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 6.0);
}

TEST_CASE("ops reject non-finite results when debug checks are on") {
  Tensor big({1}, {800.0});
  CHECK_THROWS_AS(mtt::exp(big), std::domain_error);
  set_debug_checks(false);
  CHECK_NOTHROW(mtt::exp(big));
  set_debug_checks(true);
}

TEST_CASE("matmul identity and hand-computed cases") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor r = matmul(a, eye);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r[i] == a[i]);

  Tensor b({2, 1}, {5, 6});
  Tensor p = matmul(a, b);
  CHECK(p[0] == 17.0);
  CHECK(p[1] == 39.0);
}

TEST_CASE("matmul errors name both shapes") {
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({2, 3}, std::vector<double>(6, 1.0));
  try {
    matmul(a, b);
    FAIL("expected dimension error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2x3)") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(A*B) w.r.t. A is ones * B^T") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);

  Tape tape;
  tape.watch(a);
  tape.backward(sum(matmul(a, b)));
  Tensor g = tape.grad(a);

  // ones(3x2) * B^T, computed directly
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 2; ++j) expect += b.at(k, j);
      CHECK(g.at(i, k) == doctest::Approx(expect).epsilon(1e-12));
    }

  Tensor numeric = finite_diff_grad(
      [&b](const Tensor& probe) { return sum(matmul(probe, b)).item(); }, a);
  CHECK(max_rel_err(g, numeric) < 1e-6);
}

TEST_CASE("softmax analytic values and shift invariance") {
  Tensor z = softmax(Tensor({2}, {0.0, 0.0}), 0);
  CHECK(z[0] == doctest::Approx(0.5).epsilon(1e-15));

  Tensor w = softmax(Tensor({2}, {std::log(2.0), 0.0}), 0);
  CHECK(w[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({5}, rng, -30.0, 30.0);
    const double c = rng.uniform(-100.0, 100.0);
    Tensor s1 = softmax(x, 0);
    Tensor s2 = softmax(add_const(x, c), 0);
    for (std::size_t i = 0; i < 5; ++i)
      CHECK(s1[i] == doctest::Approx(s2[i]).epsilon(1e-12));
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i) total += s1[i];
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax along a middle axis sums to one") {
  Rng rng(13);
  Tensor x = random_tensor({2, 4, 3}, rng, -50.0, 50.0);
  Tensor s = softmax(x, 1);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t in = 0; in < 3; ++in) {
      double total = 0.0;
      for (std::size_t i = 0; i < 4; ++i) total += s.at(o, i, in);
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("sigmoid values, symmetry, saturation") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(sigmoid(Tensor::scalar(100.0)).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::isfinite(sigmoid(Tensor::scalar(700.0)).item()));
  CHECK(std::isfinite(sigmoid(Tensor::scalar(-700.0)).item()));
  Rng rng(3);
  Tensor x = random_tensor({16}, rng, -20.0, 20.0);
  Tensor s1 = sigmoid(x);
  Tensor s2 = sigmoid(scale(x, -1.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(s1[i] + s2[i] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("backward basics") {
  Rng rng(5);
  SUBCASE("sum gives all-ones") {
    Tensor x = random_tensor({3, 2}, rng);
    Tape tape;
    tape.watch(x);
    tape.backward(sum(x));
    Tensor g = tape.grad(x);
    for (std::size_t i = 0; i < 6; ++i) CHECK(g[i] == 1.0);
  }
  SUBCASE("dot(x, y) gives y") {
    Tensor x = random_tensor({4}, rng);
    Tensor y = random_tensor({4}, rng);
    Tape tape;
    tape.watch(x);
    tape.backward(sum(mul(x, y)));
    Tensor g = tape.grad(x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == y[i]);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tensor x = random_tensor({4}, rng);
    Tape tape;
    tape.watch(x);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  }
  SUBCASE("loss from another tape is rejected") {
    Tensor x = random_tensor({2}, rng);
    Tape tape;
    CHECK_THROWS_AS(tape.backward(sum(x)), std::invalid_argument);
  }
}

TEST_CASE("fan-out accumulates: d(x*x)/dx = 2x exactly") {
  Rng rng(17);
  Tensor x = random_tensor({5}, rng);
  Tape tape;
  tape.watch(x);
  tape.backward(sum(mul(x, x)));
  Tensor g = tape.grad(x);
  for (std::size_t i = 0; i < 5; ++i) CHECK(g[i] == 2.0 * x[i]);
}

TEST_CASE("unreached parameters get zero gradients") {
  Rng rng(19);
  Tensor x = random_tensor({3}, rng);
  Tensor unused = random_tensor({4}, rng);
  Tape tape;
  tape.watch(x);
  tape.watch(unused);
  tape.backward(sum(x));
  Tensor g = tape.grad(unused);
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("finite_diff_grad on analytic cases") {
  Tensor x({2}, {1.0, 2.0});
  Tensor g = finite_diff_grad(
      [](const Tensor& t) {
        double acc = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
        return acc;
      },
      x);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

  Tensor zero = finite_diff_grad([](const Tensor&) { return 3.5; }, x);
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);

  CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return 0.0; }, x, -1.0),
                  std::invalid_argument);
}

TEST_CASE("backward agrees with finite differences on sigmoid(matmul) composite") {
  Rng rng(23);
  Tensor w = random_tensor({3, 4}, rng);
  Tensor x = random_tensor({2, 3}, rng);

  Tape tape;
  Tensor wt = w;
  tape.watch(wt);
  tape.backward(sum(sigmoid(matmul(x, wt))));
  Tensor analytic = tape.grad(wt);

  Tensor numeric = finite_diff_grad(
      [&x](const Tensor& probe) { return sum(sigmoid(matmul(x, probe))).item(); }, w);
  CHECK(max_rel_err(analytic, numeric) < 1e-6);
}

TEST_CASE("every primitive passes a finite-difference gradient check") {
  Rng rng(101);
  auto check = [&rng](const char* name, const std::function<Tensor(const Tensor&)>& op,
                      const Tensor& x) {
    const double err = grad_check(op, x, rng);
    INFO(name);
    CHECK(err < 1e-4);
  };

  check("add", [&](const Tensor& t) { return add(t, t); }, random_tensor({3, 3}, rng));
  {
    Tensor other = random_tensor({3, 3}, rng);
    check("sub", [&](const Tensor& t) { return sub(t, other); }, random_tensor({3, 3}, rng));
    check("mul", [&](const Tensor& t) { return mul(t, other); }, random_tensor({3, 3}, rng));
  }
  check("scale", [](const Tensor& t) { return scale(t, -2.5); }, random_tensor({4}, rng));
  check("add_const", [](const Tensor& t) { return add_const(t, 1.25); },
        random_tensor({4}, rng));
  {
    Tensor rhs = random_tensor({3, 2}, rng);
    check("matmul_lhs", [&](const Tensor& t) { return matmul(t, rhs); },
          random_tensor({4, 3}, rng));
    Tensor lhs = random_tensor({2, 3}, rng);
    check("matmul_rhs", [&](const Tensor& t) { return matmul(lhs, t); },
          random_tensor({3, 4}, rng));
  }
  check("transpose", [](const Tensor& t) { return transpose(t); }, random_tensor({3, 5}, rng));
  // keep relu inputs away from the kink at zero
  {
    Tensor x = random_tensor({10}, rng);
    std::vector<double> v = x.data();
    for (double& a : v) a += (a >= 0.0 ? 0.5 : -0.5);
    check("relu", [](const Tensor& t) { return relu(t); }, Tensor({10}, v));
  }
  check("exp", [](const Tensor& t) { return mtt::exp(t); }, random_tensor({6}, rng));
  check("log", [](const Tensor& t) { return mtt::log(t); },
        random_tensor({6}, rng, 0.5, 3.0));
  check("sigmoid", [](const Tensor& t) { return sigmoid(t); }, random_tensor({6}, rng));
  check("softplus", [](const Tensor& t) { return softplus(t); }, random_tensor({6}, rng));
  check("softmax", [](const Tensor& t) { return softmax(t, 1); }, random_tensor({3, 5}, rng));
  check("log_softmax", [](const Tensor& t) { return log_softmax(t, 1); },
        random_tensor({3, 5}, rng));
  check("sum", [](const Tensor& t) { return sum(t); }, random_tensor({3, 4}, rng));
  check("sum_axis0", [](const Tensor& t) { return sum(t, 0); }, random_tensor({3, 4}, rng));
  check("sum_axis1", [](const Tensor& t) { return sum(t, 1); }, random_tensor({3, 4}, rng));
  check("mean", [](const Tensor& t) { return mean(t); }, random_tensor({3, 4}, rng));
  check("mean_axis", [](const Tensor& t) { return mean(t, 1); }, random_tensor({3, 4}, rng));
  check("reshape", [](const Tensor& t) { return reshape(t, {6, 2}); },
        random_tensor({3, 4}, rng));
  check("slice", [](const Tensor& t) { return slice(t, 1, 1, 3); },
        random_tensor({3, 4}, rng));
  check("concat", [](const Tensor& t) { return concat({t, scale(t, 2.0)}, 0); },
        random_tensor({2, 3}, rng));
  check("broadcast", [](const Tensor& t) { return broadcast_to(t, {4, 5}); },
        random_tensor({5}, rng));
  {
    Tensor gain = random_tensor({6}, rng, 0.5, 1.5);
    Tensor bias = random_tensor({6}, rng);
    check("layer_norm_x",
          [&](const Tensor& t) { return layer_norm(t, gain, bias); },
          random_tensor({4, 6}, rng));
    Tensor x = random_tensor({4, 6}, rng);
    check("layer_norm_gain",
          [&](const Tensor& t) { return layer_norm(x, t, bias); }, gain);
    check("layer_norm_bias",
          [&](const Tensor& t) { return layer_norm(x, gain, t); }, bias);
  }
  {
    Tensor w = random_tensor({3, 3, 2, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor x = random_tensor({6, 6, 2}, rng);
    check("conv2d_x", [&](const Tensor& t) { return conv2d(t, w, b, 2, 1); }, x);
    check("conv2d_w", [&](const Tensor& t) { return conv2d(x, t, b, 2, 1); }, w);
    check("conv2d_b", [&](const Tensor& t) { return conv2d(x, w, t, 2, 1); }, b);
  }
}

TEST_CASE("slice/concat round trip and broadcast semantics") {
  Rng rng(31);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor back = concat({slice(x, 1, 0, 2), slice(x, 1, 2, 6)}, 1);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);

  Tensor v({3}, {1.0, 2.0, 3.0});
  Tensor m = broadcast_to(v, {2, 3});
  CHECK(m.at(0, 1) == 2.0);
  CHECK(m.at(1, 2) == 3.0);
  CHECK_THROWS_AS(broadcast_to(v, {3, 2}), std::invalid_argument);
}

TEST_CASE("layer_norm normalizes rows under unit gain") {
  Rng rng(37);
  Tensor x = random_tensor({3, 8}, rng, -4.0, 4.0);
  Tensor y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mu += y.at(r, j);
    mu /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) var += (y.at(r, j) - mu) * (y.at(r, j) - mu);
    var /= 8.0;
    CHECK(std::abs(mu) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps shifts variance slightly
  }
}

TEST_CASE("mixing tensors from two tapes is an error") {
  Tensor a({2}, {1.0, 2.0});
  Tensor b({2}, {3.0, 4.0});
  Tape t1, t2;
  t1.watch(a);
  t2.watch(b);
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}
