#include <doctest.h>

#include <cmath>
#include <numbers>

#include "apn/errors.hpp"
#include "apn/gradcheck.hpp"
#include "apn/ops.hpp"
#include "helpers.hpp"

using namespace apn;
using apn::test::dot;
using apn::test::random_var;
using apn::test::var;

namespace {

// Direct-summation convolution, zero padding.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, int stride, int pad) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor<double> y(Shape{n, co, ho, wo});
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < ho; ++i)
        for (int j = 0; j < wo; ++j) {
          double s = 0.0;
          for (int c = 0; c < ci; ++c)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int yy = i * stride - pad + u, xx = j * stride - pad + v;
                if (yy >= 0 && yy < h && xx >= 0 && xx < wd) s += x.at(b, c, yy, xx) * w.at(o, c, u, v);
              }
          y.at(b, o, i, j) = s;
        }
  return y;
}

}  // namespace

TEST_CASE("conv2d: identity kernel and border counts") {
  Tape<double> tape;
  auto x = var({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto one = var({1, 1, 1, 1}, {1});
  auto y = ops::conv2d(tape, x, one, Var<double>{}, 1, 0);
  CHECK(std::vector<double>(y->value.data().begin(), y->value.data().end()) ==
        std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});

  auto ones = make_var(Tensor<double>(Shape{1, 1, 3, 3}, 1.0));
  auto k = make_var(Tensor<double>(Shape{1, 1, 3, 3}, 1.0));
  auto z = ops::conv2d(tape, ones, k, Var<double>{}, 1, 1)->value;
  CHECK(z.at(0, 0, 1, 1) == 9.0);
  CHECK(z.at(0, 0, 0, 1) == 6.0);
  CHECK(z.at(0, 0, 1, 2) == 6.0);
  CHECK(z.at(0, 0, 0, 0) == 4.0);
  CHECK(z.at(0, 0, 2, 2) == 4.0);
}

TEST_CASE("conv2d: matches direct summation for strides and pads") {
  Rng rng(11);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1, 2}) {
      Tape<double> tape;
      auto x = random_var({2, 3, 7, 6}, rng, false);
      auto w = random_var({4, 3, 3, 3}, rng, false);
      const auto y = ops::conv2d(tape, x, w, Var<double>{}, stride, pad)->value;
      const auto ref = conv_oracle(x->value, w->value, stride, pad);
      REQUIRE(y.shape() == ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.ptr()[i] == doctest::Approx(ref.ptr()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d: replicate padding sees constant borders") {
  Tape<double> tape;
  auto x = make_var(Tensor<double>(Shape{1, 2, 4, 4}, 0.5));
  auto w = make_var(Tensor<double>(Shape{1, 2, 3, 3}, 1.0));
  const auto y = ops::conv2d(tape, x, w, Var<double>{}, 2, 1, ops::Padding::replicate)->value;
  for (double v : y.data()) CHECK(v == doctest::Approx(9.0));
}

TEST_CASE("conv2d: shape errors") {
  Tape<double> tape;
  auto x = make_var(Tensor<double>(Shape{1, 2, 4, 4}));
  CHECK_THROWS_AS(ops::conv2d(tape, x, make_var(Tensor<double>(Shape{1, 3, 3, 3})), Var<double>{}, 1, 1), ShapeError);
  CHECK_THROWS_AS(ops::conv2d(tape, x, make_var(Tensor<double>(Shape{1, 2, 7, 7})), Var<double>{}, 1, 1), ShapeError);
}

TEST_CASE("conv_transpose2d: single impulse yields the kernel interior") {
  Tape<double> tape;
  auto x = var({1, 1, 1, 1}, {1});
  auto w = var({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = ops::conv_transpose2d(tape, x, w, Var<double>{}, 2, 1, 1)->value;
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.at(0, 0, 0, 0) == 5.0);
  CHECK(y.at(0, 0, 0, 1) == 6.0);
  CHECK(y.at(0, 0, 1, 0) == 8.0);
  CHECK(y.at(0, 0, 1, 1) == 9.0);

  auto zero = make_var(Tensor<double>(Shape{1, 1, 3, 3}));
  const auto tz = ops::conv_transpose2d(tape, zero, w, Var<double>{}, 2, 1, 1)->value;
  for (double v : tz.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(ops::conv_transpose2d(tape, x, w, Var<double>{}, 2, 1, 2), ShapeError);
}

TEST_CASE("conv_transpose2d: adjoint of conv2d") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tape<double> tape;
    auto x = random_var({2, 3, 4, 4}, rng, false);
    auto w = random_var({5, 3, 3, 3}, rng, false);
    auto cx = ops::conv2d(tape, x, w, Var<double>{}, 2, 1)->value;  // 2 x 5 x 2 x 2
    auto y = random_var(cx.shape(), rng, false);
    auto ty = ops::conv_transpose2d(tape, y, w, Var<double>{}, 2, 1, 1)->value;
    REQUIRE(ty.shape() == x->value.shape());
    const double lhs = dot(cx, y->value), rhs = dot(x->value, ty);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("relu and sigmoid values") {
  Tape<double> tape;
  auto x = var({3}, {-3, 0, 3});
  auto r = ops::relu(tape, x)->value;
  CHECK(r.ptr()[0] == 0.0);
  CHECK(r.ptr()[2] == 3.0);
  auto s = ops::sigmoid(tape, x)->value;
  CHECK(s.ptr()[1] == 0.5);
  CHECK(s.ptr()[0] > 0.0);
  CHECK(s.ptr()[2] < 1.0);
  CHECK(s.ptr()[0] + s.ptr()[2] == doctest::Approx(1.0));
}

TEST_CASE("batch_norm2d: train statistics, eval mode and degenerate input") {
  Tape<double> tape;
  auto gamma = var({2}, {1, 1});
  auto beta = var({2}, {0.25, -0.5});
  ops::BatchNormStats<double> stats(2);

  auto constant = make_var(Tensor<double>(Shape{2, 2, 3, 3}, 4.0));
  const auto c = ops::batch_norm2d(tape, constant, gamma, beta, stats, true)->value;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 9; ++i) {
      CHECK(c.at(n, 0, i / 3, i % 3) == doctest::Approx(0.25));
      CHECK(c.at(n, 1, i / 3, i % 3) == doctest::Approx(-0.5));
    }

  Rng rng(3);
  Tensor<double> t(Shape{4, 2, 5, 5});
  for (auto& v : t.data()) v = 3.0 + 2.0 * rng.normal();
  auto x = make_var(t);
  auto zero_beta = var({2}, {0, 0});
  ops::BatchNormStats<double> fresh(2);
  const auto y = ops::batch_norm2d(tape, x, gamma, zero_beta, fresh, true)->value;
  for (int ch = 0; ch < 2; ++ch) {
    double m = 0, m2 = 0, bm = 0, bv = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        m += y.at(n, ch, i / 5, i % 5);
        m2 += y.at(n, ch, i / 5, i % 5) * y.at(n, ch, i / 5, i % 5);
        bm += t.at(n, ch, i / 5, i % 5);
      }
    m /= 100;
    m2 /= 100;
    bm /= 100;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) bv += (t.at(n, ch, i / 5, i % 5) - bm) * (t.at(n, ch, i / 5, i % 5) - bm);
    CHECK(std::abs(m) < 1e-6);
    const double biased = bv / 100;
    CHECK(m2 - m * m == doctest::Approx(biased / (biased + 1e-5)).epsilon(1e-10));
    CHECK(std::abs(m2 - m * m - 1.0) < 1e-5);
    // Running estimate: momentum 0.1 from (0, 1), unbiased variance.
    CHECK(fresh.mean.ptr()[ch] == doctest::Approx(0.1 * bm).epsilon(1e-12));
    CHECK(fresh.var.ptr()[ch] == doctest::Approx(0.9 + 0.1 * bv / 99).epsilon(1e-12));
  }

  // Eval mode uses the running statistics and leaves them alone.
  const auto mean0 = fresh.mean.ptr()[0], var0 = fresh.var.ptr()[0];
  const auto e = ops::batch_norm2d(tape, x, gamma, zero_beta, fresh, false)->value;
  CHECK(e.at(1, 0, 2, 3) == doctest::Approx((t.at(1, 0, 2, 3) - mean0) / std::sqrt(var0 + 1e-5)));
  CHECK(fresh.mean.ptr()[0] == mean0);

  auto single = make_var(Tensor<double>(Shape{1, 2, 1, 1}, 1.0));
  CHECK_THROWS_AS(ops::batch_norm2d(tape, single, gamma, beta, stats, true), DomainError);
  CHECK_NOTHROW(ops::batch_norm2d(tape, single, gamma, beta, stats, false));
}

TEST_CASE("pooling") {
  Tape<double> tape;
  CHECK(ops::global_avg_pool(tape, var({1, 1, 2, 2}, {1, 2, 3, 4}))->value.ptr()[0] == 2.5);
  CHECK(ops::channel_avg_pool(tape, var({1, 2, 1, 1}, {2, 4}))->value.ptr()[0] == 3.0);
  auto one = var({1, 1, 2, 2}, {1, -2, 3, 7});
  const auto same = ops::channel_avg_pool(tape, one)->value;
  for (int i = 0; i < 4; ++i) CHECK(same.ptr()[i] == one->value.ptr()[i]);
  auto constant = make_var(Tensor<double>(Shape{2, 3, 4, 5}, -1.5));
  const auto g = ops::global_avg_pool(tape, constant)->value;
  for (double v : g.data()) CHECK(v == -1.5);

  const auto m = ops::max_pool2d(tape, var({1, 1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16}), 3, 2, 1)
                     ->value;
  REQUIRE(m.shape() == Shape{1, 1, 2, 2});
  CHECK(m.ptr()[0] == 6.0);
  CHECK(m.ptr()[1] == 8.0);
  CHECK(m.ptr()[2] == 14.0);
  CHECK(m.ptr()[3] == 16.0);
}

TEST_CASE("bilinear_resize: half-pixel 2x2 to 4x4") {
  Tape<double> tape;
  const auto y = ops::bilinear_resize(tape, var({1, 1, 2, 2}, {1, 2, 3, 4}), 4, 4)->value;
  // Source coordinates per output index: 0, 0.25, 0.75, 1 after clamping.
  const double coord[4] = {0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(y.at(0, 0, i, j) == doctest::Approx(1.0 + coord[j] + 2.0 * coord[i]));
  CHECK(y.at(0, 0, 1, 2) == 2.25);
}

TEST_CASE("bilinear_resize: constants, linearity and mean preservation") {
  Tape<double> tape;
  auto c = make_var(Tensor<double>(Shape{1, 2, 7, 7}, 0.3));
  const auto rc = ops::bilinear_resize(tape, c, 14, 11)->value;
  for (double v : rc.data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));

  Rng rng(9);
  auto a = random_var({1, 1, 7, 7}, rng, false), b = random_var({1, 1, 7, 7}, rng, false);
  const auto ua = ops::bilinear_resize(tape, a, 14, 14)->value, ub = ops::bilinear_resize(tape, b, 14, 14)->value;
  const auto uab = ops::bilinear_resize(tape, ops::add(tape, a, b), 14, 14)->value;
  for (std::size_t i = 0; i < uab.size(); ++i) CHECK(std::abs(uab.ptr()[i] - ua.ptr()[i] - ub.ptr()[i]) <= 1e-12);

  // A linear ramp keeps its mean under exact 2x upsampling (edge clamping
  // cancels symmetrically).
  Tensor<double> ramp(Shape{1, 1, 8, 8});
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) ramp.at(0, 0, i, j) = 0.1 * i + 0.05 * j;
  const auto up = ops::bilinear_resize(tape, make_var(ramp), 16, 16)->value;
  double m0 = 0, m1 = 0;
  for (double v : ramp.data()) m0 += v / 64;
  for (double v : up.data()) m1 += v / 256;
  CHECK(std::abs(m0 - m1) <= 1e-6);
}

TEST_CASE("broadcasting add and mul") {
  Tape<double> tape;
  Rng rng(2);
  auto x = random_var({2, 3, 2, 2}, rng, false);
  const auto same = ops::mul(tape, x, make_var(Tensor<double>(Shape{2, 3, 2, 2}, 1.0)))->value;
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same.ptr()[i] == x->value.ptr()[i]);

  auto scale = make_var(Tensor<double>(Shape{1, 2, 1, 1}, 2.0));
  const auto ms = ops::mul(tape, scale, make_var(Tensor<double>(Shape{1, 2, 2, 2}, 1.0)))->value;
  for (double v : ms.data()) CHECK(v == 2.0);

  // M[c, i, j] = S[c] * xi[i, j].
  auto s = var({1, 2, 1, 1}, {1.5, -2});
  auto xi = var({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  const auto m = ops::mul(tape, s, xi)->value;
  REQUIRE(m.shape() == Shape{1, 2, 2, 2});
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(m.at(0, c, i, j) == s->value.ptr()[c] * xi->value.at(0, 0, i, j));

  CHECK_THROWS_AS(ops::add(tape, random_var({1, 2, 3, 3}, rng), random_var({1, 3, 3, 3}, rng)), ShapeError);
  CHECK_THROWS_AS(ops::add(tape, random_var({1, 2, 3, 3}, rng), random_var({2, 3, 3}, rng)), ShapeError);
}

TEST_CASE("concat and slice round trip") {
  Tape<double> tape;
  Rng rng(4);
  auto a = random_var({2, 3, 2, 2}, rng, false), b = random_var({2, 5, 2, 2}, rng, false);
  auto c = ops::concat(tape, {a, b}, 1);
  REQUIRE(c->value.shape() == Shape{2, 8, 2, 2});
  const auto a2 = ops::slice(tape, c, 1, 0, 3)->value, b2 = ops::slice(tape, c, 1, 3, 5)->value;
  CHECK(std::equal(a2.data().begin(), a2.data().end(), a->value.data().begin()));
  CHECK(std::equal(b2.data().begin(), b2.data().end(), b->value.data().begin()));
  CHECK_THROWS_AS(ops::concat(tape, {a, random_var({2, 3, 3, 2}, rng)}, 1), ShapeError);
  CHECK_THROWS_AS(ops::slice(tape, c, 1, 6, 3), ShapeError);
}

TEST_CASE("linear") {
  Tape<double> tape;
  auto x = var({2, 3}, {1, 2, 3, 4, 5, 6});
  auto eye = var({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto y = ops::linear(tape, x, eye, Var<double>{})->value;
  for (int i = 0; i < 6; ++i) CHECK(y.ptr()[i] == x->value.ptr()[i]);
  auto zero = make_var(Tensor<double>(Shape{2, 3}));
  auto b = var({2}, {0.5, -1});
  const auto z = ops::linear(tape, x, zero, b)->value;
  CHECK(z.ptr()[0] == 0.5);
  CHECK(z.ptr()[1] == -1.0);
  CHECK(z.ptr()[2] == 0.5);
  CHECK(z.ptr()[3] == -1.0);
}

TEST_CASE("softmax_cross_entropy") {
  Tape<double> tape;
  auto uniform = make_var(Tensor<double>(Shape{3, 98}, 0.7));
  const std::vector<int> labels{0, 50, 97};
  CHECK(ops::softmax_cross_entropy(tape, uniform, labels)->value.ptr()[0] == doctest::Approx(std::log(98.0)));
  CHECK(std::log(98.0) == doctest::Approx(4.5850).epsilon(1e-4));

  double prev = 1e9;
  for (double margin : {1.0, 10.0, 100.0, 1000.0}) {
    auto logits = var({1, 3}, {margin, 0, 0});
    const double loss = ops::softmax_cross_entropy(tape, logits, std::vector<int>{0})->value.ptr()[0];
    CHECK(loss <= prev);
    CHECK(std::isfinite(loss));
    prev = loss;
  }
  CHECK(prev < 1e-12);

  // Gradient is (softmax - onehot) / N.
  auto logits = var({1, 3}, {0.5, -0.25, 1.0}, true);
  auto loss = ops::softmax_cross_entropy(tape, logits, std::vector<int>{2});
  tape.backward(loss);
  const double z = std::exp(0.5) + std::exp(-0.25) + std::exp(1.0);
  CHECK(logits->grad.ptr()[0] == doctest::Approx(std::exp(0.5) / z));
  CHECK(logits->grad.ptr()[2] == doctest::Approx(std::exp(1.0) / z - 1.0));

  CHECK_THROWS_AS(ops::softmax_cross_entropy(tape, uniform, std::vector<int>{0, 1, 98}), DomainError);
}
