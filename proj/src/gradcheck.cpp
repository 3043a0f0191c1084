#include "apn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "apn/model.hpp"

namespace apn {

namespace {

struct Eval {
  double value;
  std::uint64_t kinks;
};

Eval evaluate(const LossFn& f) {
  Tape<double> tape(false);
  tape.track_kinks(true);
  auto loss = f(tape);
  return {loss->value[0], tape.kink_signature()};
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t max_coords, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_coords == 0 || n <= max_coords) return idx;
  for (std::size_t i = 0; i < max_coords; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult grad_check(const LossFn& f, const std::vector<Var<double>>& leaves, const GradCheckOptions& opts) {
  for (const auto& leaf : leaves) {
    leaf->requires_grad = true;
    leaf->zero_grad();
  }
  std::uint64_t base_kinks = 0;
  double floor = opts.floor;
  {
    Tape<double> tape;
    tape.track_kinks(true);
    auto loss = f(tape);
    base_kinks = tape.kink_signature();
    floor *= std::max(1.0, std::abs(loss->value.ptr()[0]));
    tape.backward(loss);
  }
  std::vector<Tensor<double>> analytic;
  for (const auto& leaf : leaves) {
    analytic.push_back(leaf->grad.empty() ? Tensor<double>(leaf->value.shape()) : leaf->grad);
  }

  GradCheckResult result;
  const Rng root(opts.seed);
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double>& x = leaves[li]->value;
    for (std::size_t i : pick_coords(x.size(), opts.max_coords, root.split(li))) {
      const double orig = x[i];
      bool ok = false;
      double numeric = 0.0;
      for (double h = opts.h; h >= opts.h * 1e-2 * 0.999; h /= 10) {
        x[i] = orig + h;
        const Eval plus = evaluate(f);
        x[i] = orig - h;
        const Eval minus = evaluate(f);
        x[i] = orig;
        if (plus.kinks == base_kinks && minus.kinks == base_kinks) {
          numeric = (plus.value - minus.value) / (2 * h);
          ok = true;
          break;
        }
      }
      if (!ok) {
        ++result.skipped;
        continue;
      }
      const double a = analytic[li][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (err > result.max_rel_err || result.checked == 1) {
        result.max_rel_err = std::max(result.max_rel_err, err);
        result.worst_leaf = li;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

namespace {

Var<double> random_var(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return make_var(std::move(t), true);
}

// sum(y * R) with a fixed random R, so every output coordinate matters.
Var<double> weighted_sum(Tape<double>& tape, const Var<double>& y, const Tensor<double>& r) {
  return ops::sum(tape, ops::mul(tape, y, make_var(r)));
}

Tensor<double> random_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

using UnaryOp = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Checks op(leaves) under a random weighted-sum loss.
GradCheckResult check_op(const std::vector<Var<double>>& leaves, const UnaryOp& op, Rng& rng,
                         const GradCheckOptions& opts) {
  Tape<double> probe(false);
  const Shape out_shape = op(probe, leaves)->value.shape();
  const Tensor<double> r = random_tensor(out_shape, rng);
  return grad_check([&](Tape<double>& tape) { return weighted_sum(tape, op(tape, leaves), r); }, leaves, opts);
}

struct OpCase {
  std::string name;
  std::function<GradCheckResult(Rng&, const GradCheckOptions&)> run;
};

std::vector<OpCase> op_cases() {
  using V = std::vector<Var<double>>;
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::function<V(Rng&)> make, UnaryOp op) {
    cases.push_back({std::move(name), [make, op](Rng& rng, const GradCheckOptions& o) {
                       V leaves = make(rng);
                       return check_op(leaves, op, rng, o);
                     }});
  };

  add_case(
      "conv2d", [](Rng& r) { return V{random_var({2, 3, 5, 5}, r), random_var({4, 3, 3, 3}, r), random_var({4}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::conv2d(t, v[0], v[1], v[2], 1, 1); });
  add_case(
      "conv2d_stride2_replicate",
      [](Rng& r) { return V{random_var({2, 2, 5, 4}, r), random_var({3, 2, 3, 3}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::conv2d(t, v[0], v[1], Var<double>{}, 2, 1, ops::Padding::replicate); });
  add_case(
      "conv_transpose2d",
      [](Rng& r) { return V{random_var({2, 3, 3, 3}, r), random_var({3, 2, 3, 3}, r), random_var({2}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::conv_transpose2d(t, v[0], v[1], v[2], 2, 1, 1); });
  add_case(
      "relu", [](Rng& r) { return V{random_var({2, 3, 4, 4}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::relu(t, v[0]); });
  add_case(
      "sigmoid", [](Rng& r) { return V{random_var({2, 3, 4, 4}, r, -4, 4)}; },
      [](Tape<double>& t, const V& v) { return ops::sigmoid(t, v[0]); });
  add_case(
      "batch_norm2d_train",
      [](Rng& r) { return V{random_var({2, 3, 4, 4}, r), random_var({3}, r, 0.5, 1.5), random_var({3}, r)}; },
      [](Tape<double>& t, const V& v) {
        ops::BatchNormStats<double> stats(3);
        return ops::batch_norm2d(t, v[0], v[1], v[2], stats, true);
      });
  add_case(
      "batch_norm2d_eval",
      [](Rng& r) { return V{random_var({2, 3, 4, 4}, r), random_var({3}, r, 0.5, 1.5), random_var({3}, r)}; },
      [](Tape<double>& t, const V& v) {
        ops::BatchNormStats<double> stats(3);
        stats.mean = Tensor<double>(Shape{3}, {0.1, -0.2, 0.3});
        stats.var = Tensor<double>(Shape{3}, {0.5, 1.5, 2.0});
        return ops::batch_norm2d(t, v[0], v[1], v[2], stats, false);
      });
  add_case(
      "global_avg_pool", [](Rng& r) { return V{random_var({2, 3, 4, 3}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::global_avg_pool(t, v[0]); });
  add_case(
      "channel_avg_pool", [](Rng& r) { return V{random_var({2, 5, 3, 4}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::channel_avg_pool(t, v[0]); });
  add_case(
      "max_pool2d", [](Rng& r) { return V{random_var({2, 2, 6, 5}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::max_pool2d(t, v[0], 3, 2, 1); });
  add_case(
      "bilinear_resize_up", [](Rng& r) { return V{random_var({2, 2, 3, 4}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::bilinear_resize(t, v[0], 7, 8); });
  add_case(
      "bilinear_resize_down", [](Rng& r) { return V{random_var({1, 2, 8, 7}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::bilinear_resize(t, v[0], 3, 4); });
  add_case(
      "add_broadcast",
      [](Rng& r) { return V{random_var({2, 3, 4, 4}, r), random_var({2, 3, 1, 1}, r), random_var({2, 1, 4, 4}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::add(t, ops::add(t, v[0], v[1]), v[2]); });
  add_case(
      "mul_broadcast",
      [](Rng& r) { return V{random_var({2, 3, 4, 4}, r), random_var({2, 3, 1, 1}, r), random_var({2, 1, 4, 4}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::mul(t, ops::mul(t, v[0], v[1]), v[2]); });
  add_case(
      "mul_outer", [](Rng& r) { return V{random_var({2, 3, 1, 1}, r), random_var({2, 1, 3, 4}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::mul(t, v[0], v[1]); });
  add_case(
      "concat", [](Rng& r) { return V{random_var({2, 3, 2, 2}, r), random_var({2, 5, 2, 2}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::concat(t, {v[0], v[1]}, 1); });
  add_case(
      "slice", [](Rng& r) { return V{random_var({2, 6, 3, 3}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::slice(t, v[0], 1, 2, 3); });
  add_case(
      "reshape", [](Rng& r) { return V{random_var({2, 3, 2, 2}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::reshape(t, v[0], Shape{2, 12}); });
  add_case(
      "linear", [](Rng& r) { return V{random_var({3, 5}, r), random_var({4, 5}, r), random_var({4}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::linear(t, v[0], v[1], v[2]); });
  add_case(
      "sum", [](Rng& r) { return V{random_var({2, 3, 2, 2}, r)}; },
      [](Tape<double>& t, const V& v) { return ops::sum(t, v[0]); });
  cases.push_back({"softmax_cross_entropy", [](Rng& r, const GradCheckOptions& o) {
                     V leaves{random_var({4, 6}, r, -2, 2)};
                     std::vector<int> labels;
                     for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(r.below(6)));
                     return grad_check(
                         [&](Tape<double>& t) { return ops::softmax_cross_entropy(t, leaves[0], labels); }, leaves, o);
                   }});
  return cases;
}

std::vector<Var<double>> param_leaves(ParameterStore<double>& store) {
  std::vector<Var<double>> out;
  for (auto& p : store.params()) out.push_back(p.var);
  return out;
}

GradCheckResult check_fusion(AttentionVariant variant, std::uint64_t seed, const GradCheckOptions& opts) {
  AttentionConfig cfg;
  cfg.variant = variant;
  cfg.channels = 4;
  cfg.t = 2;
  cfg.r = 2;
  ParameterStore<double> store(seed);
  AttentionFusion<double> fusion(store, "fusion", cfg);
  Rng rng = Rng(seed).split("inputs");
  auto lat = random_var({2, 4, 8, 8}, rng);
  auto up = random_var({2, 4, 8, 8}, rng);
  const Tensor<double> r = random_tensor(Shape{2, 4, 8, 8}, rng);
  std::vector<Var<double>> leaves{lat, up};
  for (auto& v : param_leaves(store)) leaves.push_back(v);
  return grad_check(
      [&](Tape<double>& tape) {
        Context<double> ctx{tape, true};
        return weighted_sum(tape, fusion(ctx, lat, up), r);
      },
      leaves, opts);
}

GradCheckResult check_model(AttentionVariant variant, std::uint64_t seed, const GradCheckOptions& opts) {
  ModelSpec spec = preset("toy");
  spec.backbone.lateral_width = 4;
  spec.attention.variant = variant;
  spec.num_classes = 3;
  ApnModel<double> model(spec, seed);
  Rng rng = Rng(seed).split("inputs");
  auto x = random_var({2, 3, 32, 32}, rng, 0.0, 1.0);
  const std::vector<int> labels{0, 2};
  std::vector<Var<double>> leaves{x};
  for (auto& v : param_leaves(model.store())) leaves.push_back(v);
  return grad_check(
      [&](Tape<double>& tape) {
        Context<double> ctx{tape, true};
        return ops::softmax_cross_entropy(tape, model.forward(ctx, x), labels);
      },
      leaves, opts);
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& opts) {
  std::vector<GradSuiteEntry> entries;
  if (opts.include_ops) {
    for (const auto& c : op_cases()) {
      GradSuiteEntry e{c.name, false, 0.0, opts.op_tolerance};
      for (int s = 0; s < opts.op_seeds; ++s) {
        Rng rng = Rng(static_cast<std::uint64_t>(s)).split(c.name);
        GradCheckOptions o;
        o.seed = static_cast<std::uint64_t>(s);
        const auto r = c.run(rng, o);
        e.max_rel_err = std::max(e.max_rel_err, r.max_rel_err);
        e.checked += r.checked;
        e.skipped += r.skipped;
      }
      entries.push_back(e);
    }
  }
  if (opts.include_e2e) {
    GradCheckOptions o;
    o.floor = opts.e2e_floor;
    o.max_coords = opts.e2e_coords;
    constexpr AttentionVariant variants[] = {
        AttentionVariant::none,       AttentionVariant::ca,         AttentionVariant::sca_alpha,
        AttentionVariant::sca_theta,  AttentionVariant::sca_theta_plus, AttentionVariant::csca_alpha,
        AttentionVariant::csca_theta, AttentionVariant::csca_theta_plus,
    };
    for (auto v : variants) {
      const auto r = check_fusion(v, 1, o);
      entries.push_back({"fusion." + std::string(variant_name(v)), true, r.max_rel_err, opts.e2e_tolerance,
                         r.checked, r.skipped});
    }
    for (auto v : {AttentionVariant::none, AttentionVariant::csca_alpha, AttentionVariant::csca_theta_plus}) {
      const auto r = check_model(v, 2, o);
      entries.push_back({"model.toy." + std::string(variant_name(v)), true, r.max_rel_err, opts.e2e_tolerance,
                         r.checked, r.skipped});
    }
  }
  return entries;
}

}  // namespace apn
