#include <doctest.h>

#include "apn/errors.hpp"
#include "apn/pyramid.hpp"
#include "helpers.hpp"

using namespace apn;
using apn::test::random_var;

namespace {

template <typename Fn>
void for_each_value(const Tensor<double>& a, const Tensor<double>& b, Fn fn) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) fn(a.ptr()[i], b.ptr()[i]);
}

}  // namespace

TEST_CASE("backbone: level sizes and widths") {
  ParameterStore<double> store(0);
  const auto spec = BackboneSpec::resnet18();
  Backbone<double> backbone(store, spec);
  std::vector<HW> sizes;
  backbone.macs({224, 224}, sizes);
  REQUIRE(sizes.size() == 4);
  CHECK(sizes[0] == HW{56, 56});
  CHECK(sizes[1] == HW{28, 28});
  CHECK(sizes[2] == HW{14, 14});
  CHECK(sizes[3] == HW{7, 7});

  // Pre-act ResNet-18 with a 512 -> 98 classifier is 11.7M parameters.
  const double total = static_cast<double>(store.param_count() + 512 * 98 + 98);
  CHECK(total == doctest::Approx(11.7e6).epsilon(0.05));

  CHECK_THROWS_AS(spec.check_input(225, 224), ConfigError);
  CHECK_THROWS_AS(spec.check_input(224, 200), ConfigError);
}

TEST_CASE("backbone: toy forward shapes") {
  ParameterStore<double> store(1);
  BackboneSpec spec;
  spec.stem_kernel = 3;
  spec.stem_width = 8;
  spec.stages = {{1, 8}, {1, 16}};
  Backbone<double> backbone(store, spec);
  Tape<double> tape(false);
  Context<double> ctx{tape, false};
  Rng rng(0);
  const auto xs = backbone(ctx, random_var({2, 3, 32, 32}, rng, false));
  REQUIRE(xs.size() == 2);
  CHECK(xs[0]->value.shape() == Shape{2, 8, 8, 8});
  CHECK(xs[1]->value.shape() == Shape{2, 16, 4, 4});
  CHECK_THROWS_AS(backbone(ctx, random_var({1, 3, 30, 30}, rng, false)), ConfigError);
  CHECK_THROWS_AS(backbone(ctx, random_var({1, 1, 32, 32}, rng, false)), ShapeError);
}

TEST_CASE("lateral: identity kernel and parameter count") {
  ParameterStore<double> store(0);
  Conv2d<double> conv(store, "lat", 3, 3, 1, 1, 0, true);
  conv.weight()->value.fill(0.0);
  for (int c = 0; c < 3; ++c) conv.weight()->value.at(c, c, 0, 0) = 1.0;
  conv.bias()->value.fill(0.0);
  Tape<double> tape;
  Context<double> ctx{tape, false};
  Rng rng(3);
  auto x = random_var({1, 3, 4, 4}, rng, false);
  for_each_value(lateral(ctx, x, conv)->value, x->value, [](double a, double b) { CHECK(a == b); });

  ParameterStore<float> big(0);
  Conv2d<float> l1(big, "l1", 64, 256, 1, 1, 0, true);
  CHECK(big.param_count() == 64 * 256 + 256);
  CHECK(l1.weight()->value.size() == 64 * 256);
}

TEST_CASE("top-down upsampling") {
  Tape<double> tape;
  Context<double> ctx{tape, false};
  auto c = make_var(Tensor<double>(Shape{1, 2, 7, 7}, 1.25));
  const auto u = top_down_upsample(ctx, c, {14, 14})->value;
  CHECK(u.shape() == Shape{1, 2, 14, 14});
  for (double v : u.data()) CHECK(v == doctest::Approx(1.25).epsilon(1e-15));

  Rng rng(1);
  auto a = random_var({1, 2, 7, 7}, rng, false), b = random_var({1, 2, 7, 7}, rng, false);
  auto ab = make_var(Tensor<double>(a->value.shape()));
  for (std::size_t i = 0; i < ab->value.size(); ++i) ab->value.ptr()[i] = a->value.ptr()[i] + b->value.ptr()[i];
  const auto ua = top_down_upsample(ctx, a, {14, 14})->value, ub = top_down_upsample(ctx, b, {14, 14})->value;
  const auto uab = top_down_upsample(ctx, ab, {14, 14})->value;
  for (std::size_t i = 0; i < uab.size(); ++i) CHECK(std::abs(uab.ptr()[i] - ua.ptr()[i] - ub.ptr()[i]) <= 1e-12);
}

TEST_CASE("fpn_fuse reductions") {
  Tape<double> tape;
  Context<double> ctx{tape, false};
  Rng rng(2);
  auto x = random_var({2, 4, 3, 3}, rng, false);
  auto zero = make_var(Tensor<double>(x->value.shape()));
  for_each_value(fpn_fuse(ctx, x, zero)->value, x->value, [](double a, double b) { CHECK(a == b); });
  for_each_value(fpn_fuse(ctx, x, x)->value, x->value, [](double a, double b) { CHECK(a == 2 * b); });

  auto u = random_var({2, 4, 3, 3}, rng, false);
  auto x3 = make_var(x->value), u3 = make_var(u->value);
  for (auto& v : x3->value.data()) v *= 3.0;
  for (auto& v : u3->value.data()) v *= 3.0;
  for_each_value(fpn_fuse(ctx, x3, u3)->value, fpn_fuse(ctx, x, u)->value,
                 [](double a, double b) { CHECK(a == doctest::Approx(3.0 * b)); });
}

TEST_CASE("smooth: impulse kernel, parameters and multiply-adds") {
  ParameterStore<double> store(0);
  Conv2d<double> conv(store, "smooth", 4, 4, 3, 1, 1, true);
  conv.weight()->value.fill(0.0);
  for (int c = 0; c < 4; ++c) conv.weight()->value.at(c, c, 1, 1) = 1.0;
  conv.bias()->value.fill(0.0);
  Tape<double> tape;
  Context<double> ctx{tape, false};
  Rng rng(5);
  auto p = random_var({1, 4, 5, 5}, rng, false);
  for_each_value(smooth(ctx, p, conv)->value, p->value, [](double a, double b) { CHECK(a == b); });

  ParameterStore<float> big(0);
  Conv2d<float> s(big, "s", 256, 256, 3, 1, 1, true);
  CHECK(s.weight()->value.size() == 589824);
  CHECK(s.macs({56, 56}) == 56ull * 56 * 256 * 256 * 9);
  CHECK(static_cast<double>(s.macs({56, 56})) == doctest::Approx(1.849e9).epsilon(1e-3));
}

TEST_CASE("conv parameter count: 3x3 conv 2->4 with bias") {
  ParameterStore<float> store(0);
  Conv2d<float> conv(store, "c", 2, 4, 3, 1, 1, true);
  CHECK(store.param_count() == 76);
}
