#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "apn/checkpoint.hpp"
#include "apn/errors.hpp"
#include "apn/train.hpp"

using namespace apn;

namespace {

// Per-class brute force straight from the definitions.
struct Oracle {
  double top1, p, r, f1;
};

Oracle brute_force(int k, const std::vector<std::int64_t>& cm) {
  std::int64_t total = 0, diag = 0;
  double p = 0, r = 0, f1 = 0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += cm[static_cast<std::size_t>(c * k + j)];
      col += cm[static_cast<std::size_t>(j * k + c)];
      total += cm[static_cast<std::size_t>(c * k + j)];
    }
    const auto tp = cm[static_cast<std::size_t>(c * k + c)];
    diag += tp;
    if (row == 0) continue;
    ++present;
    const double pc = col == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col);
    const double rc = static_cast<double>(tp) / static_cast<double>(row);
    p += pc;
    r += rc;
    f1 += pc + rc == 0.0 ? 0.0 : 2 * pc * rc / (pc + rc);
  }
  return {static_cast<double>(diag) / static_cast<double>(total), p / present, r / present, f1 / present};
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.image_size = 16;
  s.species = 2;
  s.classes_per_species = 2;
  s.samples_per_class = 4;
  return s;
}

ModelSpec small_model() {
  ModelSpec m = preset("toy");
  m.num_classes = 4;
  return m;
}

}  // namespace

TEST_CASE("lr schedule") {
  TrainConfig cfg;
  CHECK(lr_at(cfg, 0) == 0.1);
  CHECK(lr_at(cfg, 119) == 0.1);
  CHECK(lr_at(cfg, 120) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(lr_at(cfg, 299) == doctest::Approx(8e-4).epsilon(1e-12));
  for (int e = 1; e < 300; ++e) CHECK(lr_at(cfg, e) <= lr_at(cfg, e - 1));
}

TEST_CASE("metrics: hand-computed cases") {
  const auto m = metrics_from_confusion(2, {2, 0, 1, 1});
  CHECK(m.top1 == 0.75);
  CHECK(m.macro_precision == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(m.macro_recall == 0.75);
  CHECK(m.macro_f1 == doctest::Approx((0.8 + 2.0 / 3.0) / 2).epsilon(1e-15));

  const std::vector<int> truth{0, 0, 1, 1}, ones{0, 0, 0, 0};
  const auto lazy = compute_metrics(truth, ones, 2);
  CHECK(lazy.top1 == 0.5);
  CHECK(lazy.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto perfect = compute_metrics(truth, truth, 2);
  CHECK(perfect.top1 == 1.0);
  CHECK(perfect.macro_precision == 1.0);
  CHECK(perfect.macro_recall == 1.0);
  CHECK(perfect.macro_f1 == 1.0);

  CHECK_THROWS_AS(metrics_from_confusion(2, {0, 0, 0, 0}), DomainError);
  CHECK_THROWS_AS(compute_metrics(truth, std::vector<int>{0, 1, 2, 0}, 2), DomainError);
}

TEST_CASE("metrics: agree with a brute-force oracle on random matrices") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const int k = 2 + static_cast<int>(rng.below(9));
    std::vector<std::int64_t> cm(static_cast<std::size_t>(k * k));
    for (auto& v : cm) v = rng.uniform() < 0.3 ? 0 : static_cast<std::int64_t>(rng.below(20));
    cm[0] += 1;
    const auto got = metrics_from_confusion(k, cm);
    const auto want = brute_force(k, cm);
    CHECK(got.top1 == want.top1);
    CHECK(got.macro_precision == want.p);
    CHECK(got.macro_recall == want.r);
    CHECK(got.macro_f1 == want.f1);
  }
}

TEST_CASE("coarse accuracy never falls below fine accuracy") {
  const std::vector<int> coarse_of{0, 0, 1, 1, 2};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    std::vector<int> truth(40), pred(40);
    for (int i = 0; i < 40; ++i) {
      truth[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(5));
      pred[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(5));
    }
    CHECK(coarse_metrics(truth, pred, coarse_of, 3).top1 >= compute_metrics(truth, pred, 5).top1);
  }
}

TEST_CASE("augmentation") {
  const int c = 2, h = 5, w = 6;
  std::vector<float> img(static_cast<std::size_t>(c * h * w));
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i);
  auto twice = img;
  hflip(twice, c, h, w);
  CHECK(twice != img);
  hflip(twice, c, h, w);
  CHECK(twice == img);

  std::vector<float> constant(img.size(), 0.4f), out(img.size());
  for (int dy = -4; dy <= 4; ++dy)
    for (int dx = -4; dx <= 4; ++dx) {
      shift_crop(constant, c, h, w, dy, dx, out);
      for (float v : out) CHECK(v == 0.4f);
    }

  std::vector<float> a(img.size()), b(img.size());
  Rng r1(5), r2(5);
  augment(img, c, h, w, 4, r1, a);
  augment(img, c, h, w, 4, r2, b);
  CHECK(a == b);
}

TEST_CASE("synthetic data: determinism, balance and decodability") {
  SyntheticSpec spec;
  const auto a = synth_generate(spec, 1), b = synth_generate(spec, 1), c = synth_generate(spec, 2);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.size() == 8 * 16);
  std::vector<int> counts(8);
  for (int f : a.fine) ++counts[static_cast<std::size_t>(f)];
  for (int n : counts) CHECK(n == 16);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.coarse[i] == a.fine[i] / 2);
  for (float v : a.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  // Texture statistics alone separate the fine classes well above chance.
  const auto pred = texture_oracle(a, c);
  CHECK(compute_metrics(c.fine, pred, 8).top1 > 2.0 / 8.0);

  SyntheticSpec bad = spec;
  bad.species = 7;
  CHECK_THROWS_AS(synth_generate(bad, 0), ConfigError);
}

TEST_CASE("dataset directory round trip") {
  const auto ds = synth_generate(small_spec(), 3);
  const auto dir = (std::filesystem::temp_directory_path() / "apn_unit_dataset").string();
  std::filesystem::remove_all(dir);
  write_dataset(ds, dir);
  const auto back = read_dataset(dir);
  CHECK(back.hash() == ds.hash());
  CHECK(back.num_fine == ds.num_fine);
  CHECK(back.num_coarse == ds.num_coarse);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_dataset(dir), IoError);
}

TEST_CASE("first-batch loss is close to ln K") {
  const auto data = synth_generate(small_spec(), 0);
  ApnModel<float> model(small_model(), 0);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto x = make_var(gather_batch<float>(data, order, 0, order.size()));
  const std::vector<int> labels(data.fine.begin(), data.fine.end());
  Tape<float> tape;
  Context<float> ctx{tape, true};
  const auto loss = ops::softmax_cross_entropy(tape, model.forward(ctx, x), labels)->value.ptr()[0];
  CHECK(std::abs(loss - std::log(4.0)) < 0.35);
}

TEST_CASE("training with lr 0 leaves parameters unchanged") {
  const auto data = synth_generate(small_spec(), 0);
  ApnModel<float> model(small_model(), 1);
  std::vector<std::vector<float>> before;
  for (const auto& p : model.store().params()) before.emplace_back(p.var->value.data().begin(), p.var->value.data().end());
  TrainConfig cfg;
  cfg.lr0 = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  train(model, data, data, cfg);
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& v = model.store().params()[i].var->value;
    CHECK(std::equal(before[i].begin(), before[i].end(), v.data().begin()));
  }
}

TEST_CASE("training is reproducible and keeps the best checkpoint") {
  const auto data = synth_generate(small_spec(), 0);
  TrainConfig cfg;
  cfg.lr0 = 0.02;
  cfg.epochs = 3;
  cfg.batch_size = 5;  // 16 images: batches of 5, 5 and 6
  cfg.seed = 4;
  std::string logs[2];
  std::vector<std::uint8_t> ckpt[2];
  TrainResult results[2];
  for (int run = 0; run < 2; ++run) {
    ApnModel<float> model(small_model(), 4);
    results[run] = train(model, data, data, cfg, [&](const EpochLog& e) { logs[run] += e.json() + "\n"; });
    ckpt[run] = serialize_state(model.store().state());
  }
  CHECK(logs[0] == logs[1]);
  CHECK(ckpt[0] == ckpt[1]);
  CHECK(results[0].best_checkpoint == results[1].best_checkpoint);

  const auto& hist = results[0].history;
  REQUIRE(hist.size() == 3);
  int best = 0;
  for (int e = 1; e < 3; ++e) {
    if (hist[static_cast<std::size_t>(e)].val_top1 > hist[static_cast<std::size_t>(best)].val_top1) best = e;
  }
  CHECK(results[0].best_epoch == best);
  CHECK(hist[static_cast<std::size_t>(best)].best);

  // The saved best checkpoint reproduces the logged accuracy.
  ApnModel<float> restored(small_model(), 99);
  deserialize_state(results[0].best_checkpoint, restored.store().state());
  CHECK(evaluate(restored, data).fine.top1 == hist[static_cast<std::size_t>(best)].val_top1);
}

TEST_CASE("divergent training reports the epoch and batch") {
  const auto data = synth_generate(small_spec(), 0);
  ApnModel<float> model(small_model(), 0);
  TrainConfig cfg;
  cfg.lr0 = 1e12;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  try {
    train(model, data, data, cfg);
    FAIL("no error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr_decay_epochs = {200, 100};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
