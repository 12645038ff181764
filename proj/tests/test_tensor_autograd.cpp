#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "sfpp/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace sfpp;
using TD = Tensor<double>;

namespace {

TD eval_conv(const TD& x, const TD& k, int stride, int pad, kernels::ConvAlgo algo = kernels::ConvAlgo::kIm2col) {
  return kernels::conv2d(x, k, static_cast<const TD*>(nullptr), stride, pad, algo);
}

void check_close(const TD& a, const TD& b, double tol) {
  REQUIRE(a.shape() == b.shape());
  for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol).scale(1.0));
}

}  // namespace

TEST_CASE("tensor rejects bad shapes and non-finite values") {
  CHECK_THROWS_AS(TD(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(TD(Shape{2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(TD(Shape{2}).reshaped(Shape{3}), ShapeError);
  Tape<double> tape;
  Var x = tape.constant(TD(Shape{2}, {800.0, 1.0}));
  CHECK_THROWS_AS(exp(tape, x), NumericError);
}

TEST_CASE("conv2d hand example with a 1x1 kernel") {
  const TD x(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const TD k(Shape{1, 1, 1, 1}, {2.0});
  const TD expect(Shape{1, 3, 3}, {2, 4, 6, 8, 10, 12, 14, 16, 18});
  CHECK(eval_conv(x, k, 1, 0) == expect);
  CHECK(eval_conv(x, k, 1, 0, kernels::ConvAlgo::kDirect) == expect);
}

TEST_CASE("conv2d identity kernel and output shape") {
  std::mt19937_64 rng(3);
  const TD x = oracle::random_tensor({1, 7, 6}, rng);
  TD delta(Shape{1, 1, 3, 3});
  delta[4] = 1.0;
  CHECK(eval_conv(x, delta, 1, 1) == x);
  const TD y = eval_conv(oracle::random_tensor({1, 8, 8}, rng), oracle::random_tensor({1, 1, 3, 3}, rng), 2, 1);
  CHECK(y.shape() == Shape{1, 4, 4});
  CHECK_THROWS_AS(eval_conv(x, oracle::random_tensor({1, 2, 3, 3}, rng), 1, 1), ShapeError);
}

TEST_CASE("conv2d matches the direct oracle for both algorithms") {
  std::mt19937_64 rng(5);
  for (int stride : {1, 2})
    for (int pad : {0, 1, 2}) {
      const TD x = oracle::random_tensor({3, 9, 8}, rng);
      const TD k = oracle::random_tensor({4, 3, 3, 3}, rng);
      const TD ref = oracle::conv2d(x, k, stride, pad);
      check_close(eval_conv(x, k, stride, pad), ref, 1e-12);
      check_close(eval_conv(x, k, stride, pad, kernels::ConvAlgo::kDirect), ref, 1e-12);
    }
}

TEST_CASE("conv2d is linear in its input") {
  std::mt19937_64 rng(11);
  const TD x = oracle::random_tensor({2, 6, 6}, rng), y = oracle::random_tensor({2, 6, 6}, rng);
  const TD k = oracle::random_tensor({3, 2, 3, 3}, rng);
  const double a = 1.7, b = -0.4;
  const TD lhs = eval_conv(TD(x.shape(), (a * x.array() + b * y.array()).eval()), k, 1, 1);
  const TD cx = eval_conv(x, k, 1, 1), cy = eval_conv(y, k, 1, 1);
  check_close(lhs, TD(cx.shape(), (a * cx.array() + b * cy.array()).eval()), 1e-5);
}

TEST_CASE("xcorr_depthwise hand examples") {
  const TD z(Shape{1, 1, 1}, {3.0});
  const TD s(Shape{1, 2, 2}, {1, 2, 3, 4});
  CHECK(kernels::xcorr_depthwise(z, s) == TD(Shape{1, 2, 2}, {3, 6, 9, 12}));

  std::mt19937_64 rng(2);
  const TD t = oracle::random_tensor({3, 4, 4}, rng);
  const TD self = kernels::xcorr_depthwise(t, t);
  REQUIRE(self.shape() == Shape{3, 1, 1});
  for (int c = 0; c < 3; ++c) {
    double ss = 0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) ss += t(c, i, j) * t(c, i, j);
    CHECK(self[c] == doctest::Approx(ss));
  }
}

TEST_CASE("xcorr_depthwise with a delta template extracts the search window") {
  std::mt19937_64 rng(4);
  const TD s = oracle::random_tensor({2, 6, 6}, rng);
  TD z(Shape{2, 3, 3});
  z(0, 1, 2) = 1.0;
  z(1, 0, 0) = 1.0;
  const TD y = kernels::xcorr_depthwise(z, s);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(y(0, i, j) == s(0, i + 1, j + 2));
      CHECK(y(1, i, j) == s(1, i, j));
    }
}

TEST_CASE("xcorr_depthwise equals per-channel conv2d") {
  std::mt19937_64 rng(6);
  const TD z = oracle::random_tensor({3, 3, 2}, rng), x = oracle::random_tensor({3, 7, 8}, rng);
  const TD y = kernels::xcorr_depthwise(z, x);
  check_close(y, oracle::xcorr_depthwise(z, x), 1e-12);
  for (int c = 0; c < 3; ++c) {
    TD xc(Shape{1, 7, 8}, x.array().segment(c * 56, 56).eval());
    TD kc(Shape{1, 1, 3, 2}, z.array().segment(c * 6, 6).eval());
    const TD oc = eval_conv(xc, kc, 1, 0);
    for (Eigen::Index i = 0; i < oc.size(); ++i) CHECK(oc[i] == doctest::Approx(y[c * oc.size() + i]));
  }
}

TEST_CASE("elementwise examples") {
  Tape<double> tape;
  Var r = relu(tape, tape.constant(TD(Shape{3}, {-1.0, 0.0, 2.0})));
  CHECK(tape.value(r) == TD(Shape{3}, {0.0, 0.0, 2.0}));
  const TD x(Shape{2, 2}, {1.5, -2.0, 0.25, 4.0});
  Var a = add(tape, tape.constant(x), tape.constant(TD(Shape{2, 2})));
  CHECK(tape.value(a) == x);
  Var e = exp(tape, tape.constant(TD(Shape{2}, {0.0, 1.0})));
  CHECK(tape.value(e)[0] == 1.0);
  CHECK(tape.value(e)[1] == doctest::Approx(2.718281828459045));
  Var m = mul(tape, tape.constant(x), tape.constant(TD::scalar(2.0)));
  CHECK(tape.value(m)[1] == -4.0);
  CHECK_THROWS_AS(add(tape, tape.constant(TD(Shape{2})), tape.constant(TD(Shape{3}))), ShapeError);
  const Var ops[] = {tape.constant(x)};
  CHECK(tape.value(elementwise(tape, Elementwise::kScale, std::span<const Var>(ops), 3.0))[0] == 4.5);
}

TEST_CASE("backward examples") {
  std::mt19937_64 rng(8);
  const TD x0 = oracle::random_tensor({2, 3}, rng);
  {
    Tape<double> tape;
    Var x = tape.variable(x0);
    tape.backward(sum(tape, scale(tape, x, 2.0)));
    CHECK(tape.grad(x) == TD(x0.shape(), 2.0));
  }
  {
    Tape<double> tape;
    Var x = tape.variable(oracle::random_tensor({4}, rng, -3, -0.1));
    tape.backward(sum(tape, relu(tape, x)));
    CHECK(tape.grad(x) == TD(Shape{4}));
  }
  {
    Tape<double> tape;
    Var x = tape.variable(oracle::random_tensor({1, 4, 5}, rng));
    Var k = tape.constant(TD(Shape{1, 1, 1, 1}, {0.75}));
    tape.backward(sum(tape, conv2d(tape, x, k, 1, 0)));
    CHECK(tape.grad(x) == TD(Shape{1, 4, 5}, 0.75));
  }
}

TEST_CASE("gradients accumulate over multiple consumers") {
  Tape<double> tape;
  Var x = tape.variable(TD(Shape{2}, {1.0, 3.0}));
  Var y = add(tape, mul(tape, x, x), x);  // x^2 + x
  tape.backward(sum(tape, y));
  CHECK(tape.grad(x) == TD(Shape{2}, {3.0, 7.0}));
  CHECK_THROWS_AS(tape.backward(sum(tape, y)), InvalidArgument);
}

TEST_CASE("backward visits nodes in reverse order") {
  Tape<double> tape;
  std::vector<int> order;
  Var x = tape.variable(TD::scalar(1.0));
  Var v = x;
  for (int i = 0; i < 4; ++i)
    v = tape.record(tape.value(v), {v},
                    [&order, i, prev = v](Tape<double>& t, const TD& g) {
                      order.push_back(i);
                      t.accumulate(prev, g);
                    },
                    "probe");
  tape.backward(v);
  CHECK(order == std::vector<int>{3, 2, 1, 0});
  CHECK(tape.grad(x).item() == 1.0);
}

TEST_CASE("finite_diff_check positive and negative controls") {
  std::mt19937_64 rng(9);
  const TD x = oracle::random_tensor({3, 3}, rng);
  auto sumsq = [](Tape<double>& t, Var v) { return sum(t, mul(t, v, v)); };
  CHECK(finite_diff_check(sumsq, x, 1e-5, 1e-4).pass);
  auto constant = [](Tape<double>& t, Var) { return t.constant(TD::scalar(3.0)); };
  CHECK(finite_diff_check(constant, x, 1e-5, 1e-4).pass);

  // Analytic gradient off by 2x.
  const auto f = [&](const TD& p) { return evaluate(sumsq, p); };
  TD wrong = analytic_gradient(sumsq, x);
  wrong.array() *= 2.0;
  const GradCheckReport bad = compare_gradients(f, x, wrong, 1e-5, 1e-4);
  CHECK_FALSE(bad.pass);
  CHECK(bad.max_rel_err > 0.4);
}

TEST_CASE("op gradients pass finite differences in 64-bit") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 5; ++rep) {
    const TD k = oracle::random_tensor({2, 2, 3, 3}, rng);
    const TD w = oracle::random_tensor({2, 3, 3}, rng);
    auto conv_in = [&](Tape<double>& t, Var v) {
      return sum(t, mul(t, conv2d(t, v, t.constant(k), 2, 1), t.constant(w)));
    };
    CHECK(finite_diff_check(conv_in, oracle::random_tensor({2, 5, 5}, rng), 1e-6).pass);

    const TD s = oracle::random_tensor({2, 5, 4}, rng);
    const TD wx = oracle::random_tensor({2, 3, 3}, rng);
    auto xc = [&](Tape<double>& t, Var v) {
      return sum(t, mul(t, xcorr_depthwise(t, v, t.constant(s)), t.constant(wx)));
    };
    CHECK(finite_diff_check(xc, oracle::random_tensor({2, 3, 2}, rng), 1e-6).pass);

    const TD wp = oracle::random_tensor({1, 2, 2}, rng);
    auto pool = [&](Tape<double>& t, Var v) { return sum(t, mul(t, maxpool2d(t, v, 2), t.constant(wp))); };
    TD distinct(Shape{1, 4, 4});
    for (int i = 0; i < 16; ++i) distinct[i] = 0.1 * ((i * 7) % 16);
    CHECK(finite_diff_check(pool, distinct, 1e-6).pass);
  }
}

TEST_CASE("chain gradient equals the product of per-op Jacobians") {
  std::mt19937_64 rng(13);
  const TD k = oracle::random_tensor({2, 1, 2, 2}, rng);
  const TD x = oracle::random_tensor({1, 3, 3}, rng, 0.2, 1.0);
  const TD up = oracle::random_tensor({2, 2, 2}, rng);

  // x -> conv -> exp -> upstream weights
  const auto j1 = oracle::jacobian([&](const TD& v) { return oracle::conv2d(v, k, 1, 0); }, x);
  const TD c = oracle::conv2d(x, k, 1, 0);
  const auto j2 = oracle::jacobian([](const TD& v) { return TD(v.shape(), v.array().exp().eval()); }, c);
  std::vector<double> expect(size_t(x.size()), 0.0);
  for (size_t i = 0; i < expect.size(); ++i)
    for (size_t o = 0; o < j2.size(); ++o)
      for (size_t m = 0; m < j1.size(); ++m) expect[i] += up[Eigen::Index(o)] * j2[o][m] * j1[m][i];

  Tape<double> tape;
  Var v = tape.variable(x);
  Var y = exp(tape, conv2d(tape, v, tape.constant(k), 1, 0));
  tape.backward(sum(tape, mul(tape, y, tape.constant(up))));
  const TD g = tape.grad(v);
  for (size_t i = 0; i < expect.size(); ++i) CHECK(g[Eigen::Index(i)] == doctest::Approx(expect[i]).epsilon(1e-6));
}
