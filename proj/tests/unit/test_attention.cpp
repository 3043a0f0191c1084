#include <doctest.h>

#include "apn/attention.hpp"
#include "apn/errors.hpp"
#include "helpers.hpp"

using namespace apn;
using apn::test::random_var;
using apn::test::var;

namespace {

AttentionConfig config(AttentionVariant v, int channels, int t = 2, int r = 2) {
  AttentionConfig c;
  c.variant = v;
  c.channels = channels;
  c.t = t;
  c.r = r;
  return c;
}

const AttentionVariant kVariants[] = {
    AttentionVariant::none,       AttentionVariant::ca,         AttentionVariant::sca_alpha,
    AttentionVariant::sca_theta,  AttentionVariant::sca_theta_plus, AttentionVariant::csca_alpha,
    AttentionVariant::csca_theta, AttentionVariant::csca_theta_plus,
};

// First recorded node whose output has the given shape.
const Var<double>* find_output(const Tape<double>& tape, const Shape& shape) {
  for (const auto& n : tape.nodes()) {
    if (n.output->value.shape() == shape) return &n.output;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (auto v : kVariants) CHECK(parse_variant(variant_name(v)) == v);
  CHECK(parse_variant("csca") == AttentionVariant::csca_alpha);
  CHECK(parse_variant("csca-theta-plus") == AttentionVariant::csca_theta_plus);
  CHECK(parse_variant("sca_theta") == AttentionVariant::sca_theta);
  CHECK_THROWS_AS(parse_variant("cbam"), ConfigError);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(config(AttentionVariant::ca, 8, 32).validate(), ConfigError);
  CHECK_THROWS_AS(config(AttentionVariant::sca_theta, 4, 2, 8).validate(), ConfigError);
  CHECK(config(AttentionVariant::csca_alpha, 8, 3).validate().size() == 1);
  CHECK(config(AttentionVariant::csca_alpha, 8, 2).validate().empty());
}

TEST_CASE("competitive attention: shapes, range and zero-logit case") {
  ParameterStore<double> big(0);
  CompetitiveAttention<double> wide(big, "ca", config(AttentionVariant::ca, 256, 16));
  CHECK(wide.fc1().weight()->value.shape() == Shape{32, 512});
  CHECK(wide.fc2().weight()->value.shape() == Shape{512, 32});

  ParameterStore<double> store(1);
  CompetitiveAttention<double> ca(store, "ca", config(AttentionVariant::ca, 4));
  Tape<double> tape;
  Context<double> train{tape, true}, eval{tape, false};
  Rng rng(2);
  auto x = random_var({3, 4, 5, 5}, rng, false), u = random_var({3, 4, 5, 5}, rng, false);
  const auto [s1, s2] = ca(train, x, u);
  CHECK(s1->value.shape() == Shape{3, 4, 1, 1});
  for (const auto* s : {&s1, &s2})
    for (double v : (*s)->value.data()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }

  // Fresh batch-norm statistics, so zero logits stay zero in eval mode.
  ParameterStore<double> fresh_store(1);
  CompetitiveAttention<double> fresh(fresh_store, "ca", config(AttentionVariant::ca, 4));
  for (auto* l : {&fresh.fc1(), &fresh.fc2()}) {
    l->weight()->value.fill(0.0);
    l->bias()->value.fill(0.0);
  }
  const auto [z1, z2] = fresh(eval, x, u);
  for (double v : z1->value.data()) CHECK(v == 0.5);
  for (double v : z2->value.data()) CHECK(v == 0.5);
}

TEST_CASE("ca_scale: unit and half masks") {
  Tape<double> tape;
  Context<double> ctx{tape, false};
  Rng rng(3);
  auto x = random_var({2, 3, 4, 4}, rng, false), u = random_var({2, 3, 4, 4}, rng, false);
  auto ones = make_var(Tensor<double>(Shape{2, 3, 1, 1}, 1.0));
  auto half = make_var(Tensor<double>(Shape{2, 3, 1, 1}, 0.5));
  const auto p1 = ca_scale(ctx, x, u, ones, ones)->value;
  const auto p2 = ca_scale(ctx, x, u, half, half)->value;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1.ptr()[i] == x->value.ptr()[i] + u->value.ptr()[i]);
    CHECK(p2.ptr()[i] == doctest::Approx(0.5 * p1.ptr()[i]).epsilon(1e-15));
  }
}

TEST_CASE("spatial attention: range, intermediate sizes and constant inputs") {
  for (auto v : {AttentionVariant::sca_alpha, AttentionVariant::sca_theta, AttentionVariant::sca_theta_plus}) {
    INFO(variant_name(v));
    ParameterStore<double> store(4);
    SpatialAttention<double> sca(store, "sca", config(v, 8, 2, 2));
    Tape<double> tape;
    Context<double> ctx{tape, true};
    Rng rng(5);
    auto x = random_var({2, 8, 7, 7}, rng), u = random_var({2, 8, 7, 7}, rng);
    const auto [m1, m2] = sca(ctx, x, u);
    CHECK(m1->value.shape() == Shape{2, 1, 7, 7});
    for (double m : m1->value.data()) {
      CHECK(m > 0.0);
      CHECK(m < 1.0);
    }
    // Stride-2 reduction of a 7x7 level is 4x4 (2 channels, or 2C/r for theta+).
    const int reduced = v == AttentionVariant::sca_theta_plus ? 8 : 2;
    CHECK(find_output(tape, Shape{2, reduced, 4, 4}) != nullptr);
    if (v != AttentionVariant::sca_alpha) CHECK(find_output(tape, Shape{2, 4, 7, 7}) != nullptr);
  }

  // Constant-in, constant-out holds for the interpolating variants.
  for (auto v : {AttentionVariant::sca_alpha, AttentionVariant::sca_theta}) {
    ParameterStore<double> store(6);
    SpatialAttention<double> sca(store, "sca", config(v, 4));
    Tape<double> tape(false);
    Context<double> ctx{tape, false};
    auto x = make_var(Tensor<double>(Shape{1, 4, 6, 6}, 0.7));
    auto u = make_var(Tensor<double>(Shape{1, 4, 6, 6}, -0.2));
    const auto [m1, m2] = sca(ctx, x, u);
    for (const auto* m : {&m1, &m2})
      for (double value : (*m)->value.data()) CHECK(value == doctest::Approx((*m)->value.ptr()[0]).epsilon(1e-12));
  }
}

TEST_CASE("theta squeeze widths") {
  ParameterStore<double> store(0);
  SpatialAttention<double> one(store, "a", config(AttentionVariant::sca_theta, 8, 2, 8));
  Tape<double> tape(false);
  Context<double> ctx{tape, false};
  Rng rng(0);
  auto x = random_var({1, 8, 4, 4}, rng, false);
  CHECK(one.squeeze(ctx, x, x).first->value.shape() == Shape{1, 1, 4, 4});

  ParameterStore<float> big(0);
  SpatialAttention<float> wide(big, "b", config(AttentionVariant::sca_theta, 256, 16, 8));
  Tape<float> ft(false);
  Context<float> fctx{ft, false};
  auto fx = make_var(Tensor<float>(Shape{1, 256, 2, 2}, 0.1f));
  CHECK(wide.squeeze(fctx, fx, fx).second->value.shape() == Shape{1, 32, 2, 2});
}

TEST_CASE("csca_combine: broadcast enumeration") {
  ParameterStore<double> store(0);
  Conv2d<double> post_a(store, "a", 2, 2, 1, 1, 0, false), post_b(store, "b", 2, 2, 1, 1, 0, false);
  for (auto* c : {&post_a, &post_b}) {
    c->weight()->value.fill(0.0);
    c->weight()->value.at(0, 0, 0, 0) = c->weight()->value.at(1, 1, 0, 0) = 1.0;
  }
  Tape<double> tape;
  Context<double> ctx{tape, false};
  auto x = var({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto zero = make_var(Tensor<double>(Shape{1, 2, 2, 2}));
  auto s = var({1, 2, 1, 1}, {0.5, 2.0});
  auto xi = var({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  const auto p = csca_combine(ctx, x, zero, s, s, xi, xi, post_a, post_b)->value;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const double m = s->value.ptr()[c] * xi->value.at(0, 0, i, j);
        CHECK(p.at(0, c, i, j) == doctest::Approx(m * x->value.at(0, c, i, j)).epsilon(1e-15));
      }
}

TEST_CASE("attention parameter counts match the closed form") {
  for (auto v : kVariants) {
    for (bool sigmoid : {true, false}) {
      INFO(variant_name(v), " sigmoid ", sigmoid);
      auto cfg = config(v, 8, 2, 2);
      cfg.theta_plus_sigmoid = sigmoid;
      ParameterStore<float> store(0);
      AttentionFusion<float> fusion(store, "f", cfg);
      CHECK(store.param_count() == attention_param_count(cfg));
    }
  }
  ParameterStore<float> none(0);
  AttentionFusion<float> plain(none, "f", config(AttentionVariant::none, 8));
  CHECK(none.param_count() == 0);

  // CA fcs, 3x3 reduce, 1x1 excite, BN and the two 1x1 post convs.
  const auto per_level = attention_param_count(config(AttentionVariant::csca_alpha, 256, 16, 8));
  CHECK(per_level == (512 * 32 + 32) + (32 * 512 + 512) + 4 * 256 + 36 + 4 + 4 + 2 * 65536);
  CHECK(static_cast<double>(per_level) == doctest::Approx(164e3).epsilon(0.02));
}

TEST_CASE("CSCA registers ten parameter groups per level") {
  ParameterStore<float> store(0);
  AttentionFusion<float> fusion(store, "level1", config(AttentionVariant::csca_alpha, 256, 16, 8));
  const auto groups = store.group_names();
  CHECK(groups.size() == 10);
}

TEST_CASE("fusion: same seed builds identical weights") {
  ParameterStore<double> a(9), b(9);
  AttentionFusion<double> fa(a, "f", config(AttentionVariant::csca_theta_plus, 8));
  AttentionFusion<double> fb(b, "f", config(AttentionVariant::csca_theta_plus, 8));
  const auto sa = a.state(), sb = b.state();
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].name == sb[i].name);
    CHECK(std::equal(sa[i].tensor->data().begin(), sa[i].tensor->data().end(), sb[i].tensor->data().begin()));
  }
}

TEST_CASE("fusion reductions to the FPN sum") {
  Rng rng(8);
  for (auto v : kVariants) {
    INFO(variant_name(v));
    ParameterStore<double> store(7);
    AttentionFusion<double> fusion(store, "f", config(v, 4));
    fusion.force_unit_masks(true);
    fusion.set_identity_post();
    Tape<double> tape;
    Context<double> ctx{tape, true};
    auto x = random_var({2, 4, 6, 6}, rng, false), u = random_var({2, 4, 6, 6}, rng, false);
    const auto p = fusion(ctx, x, u)->value;
    const auto ref = fpn_fuse(ctx, x, u)->value;
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p.ptr()[i] - ref.ptr()[i]) <= 1e-12);
  }
  ParameterStore<double> store(0);
  AttentionFusion<double> fusion(store, "f", config(AttentionVariant::ca, 4));
  Tape<double> tape;
  Context<double> ctx{tape, false};
  CHECK_THROWS_AS(fusion(ctx, random_var({1, 4, 4, 4}, rng), random_var({1, 4, 2, 2}, rng)), ShapeError);
}
