#include "apn/train.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

#include "apn/checkpoint.hpp"

namespace apn {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch norm needs two samples)");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
  if (lr0 < 0) throw ConfigError("lr0 must be >= 0");
  if (lr_decay_factor <= 0) throw ConfigError("lr_decay_factor must be > 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (augment_pad < 0) throw ConfigError("augment_pad must be >= 0");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    const int e = lr_decay_epochs[i];
    if (e <= 0) throw ConfigError("lr decay epoch " + std::to_string(e) + " must be > 0");
    if (i > 0 && e <= lr_decay_epochs[i - 1]) throw ConfigError("lr decay epochs must be strictly increasing");
  }
}

double lr_at(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr0;
  for (int e : cfg.lr_decay_epochs) {
    if (epoch >= e) lr *= cfg.lr_decay_factor;
  }
  return lr;
}

template <typename T>
Tensor<T> gather_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t begin,
                       std::size_t count) {
  Tensor<T> batch(Shape{static_cast<int>(count), data.channels, data.height, data.width});
  const std::size_t per = data.image_size();
  for (std::size_t i = 0; i < count; ++i) {
    const auto img = data.image(order[begin + i]);
    std::copy(img.begin(), img.end(), batch.ptr() + i * per);
  }
  return batch;
}

namespace {

template <typename T>
int argmax_row(const Tensor<T>& logits, int row) {
  const int k = logits.dim(1);
  const T* p = logits.ptr() + static_cast<std::size_t>(row) * k;
  return static_cast<int>(std::max_element(p, p + k) - p);
}

}  // namespace

template <typename T>
Evaluation evaluate(const ApnModel<T>& model, const Dataset& data, int batch_size) {
  if (data.size() == 0) throw DomainError("evaluate on an empty dataset");
  const int k = model.spec().num_classes;
  if (data.num_fine > k) {
    throw ConfigError("dataset has " + std::to_string(data.num_fine) + " classes, model " + std::to_string(k));
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Evaluation ev;
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(static_cast<std::size_t>(batch_size), data.size() - begin);
    Tape<T> tape(false);
    Context<T> ctx{tape, false};
    auto logits = model.forward(ctx, make_var(gather_batch<T>(data, order, begin, count)));
    const std::span<const int> labels(data.fine.data() + begin, count);
    loss_sum += static_cast<double>(ops::softmax_cross_entropy(tape, logits, labels)->value[0]) * count;
    for (std::size_t i = 0; i < count; ++i) ev.predictions.push_back(argmax_row(logits->value, static_cast<int>(i)));
  }
  ev.loss = loss_sum / static_cast<double>(data.size());
  ev.fine = compute_metrics(data.fine, ev.predictions, k);
  std::vector<int> coarse_of = data.coarse_of_fine();
  // Classes the model can predict but the data never shows map to no species;
  // route them to an extra bucket so they still count as wrong.
  coarse_of.resize(static_cast<std::size_t>(k), data.num_coarse);
  ev.coarse = coarse_metrics(data.fine, ev.predictions, coarse_of, data.num_coarse + 1);
  return ev;
}

std::string EpochLog::json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["train_loss"] = train_loss;
  j["train_running_top1"] = train_running_top1;
  j["train_top1"] = train_top1;
  j["val_top1"] = val_top1;
  j["val_macro_precision"] = val_macro_precision;
  j["val_macro_recall"] = val_macro_recall;
  j["val_macro_f1"] = val_macro_f1;
  j["val_coarse_top1"] = val_coarse_top1;
  j["best"] = best;
  return j.dump();
}

TrainResult train(ApnModel<float>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  const std::size_t n = train_set.size();
  if (n < 2) throw ConfigError("training needs at least 2 samples");
  if (train_set.num_fine > model.spec().num_classes) {
    throw ConfigError("training set has " + std::to_string(train_set.num_fine) + " classes, model " +
                      std::to_string(model.spec().num_classes));
  }
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  // Batch boundaries; a trailing batch of one sample joins the previous one.
  std::vector<std::size_t> bounds;
  for (std::size_t b = 0; b < n; b += batch) bounds.push_back(b);
  if (bounds.size() > 1 && n - bounds.back() == 1) bounds.pop_back();
  bounds.push_back(n);

  const Rng root(cfg.seed);
  const Rng shuffle_root = root.split("shuffle");
  const Rng augment_root = root.split("augment");
  auto& store = model.store();
  TrainResult result;
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
    const Rng epoch_aug = augment_root.split(static_cast<std::uint64_t>(epoch));
    const double lr = lr_at(cfg, epoch);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      const std::size_t begin = bounds[b], count = bounds[b + 1] - bounds[b];
      Tensor<float> x = gather_batch<float>(train_set, order, begin, count);
      if (cfg.augment) {
        const std::size_t per = train_set.image_size();
        std::vector<float> src(per);
        for (std::size_t i = 0; i < count; ++i) {
          Rng rng = epoch_aug.split(begin + i);
          std::span<float> img(x.ptr() + i * per, per);
          std::copy(img.begin(), img.end(), src.begin());
          augment(src, train_set.channels, train_set.height, train_set.width, cfg.augment_pad, rng, img);
        }
      }
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = train_set.fine[order[begin + i]];

      Tape<float> tape;
      Context<float> ctx{tape, true};
      auto logits = model.forward(ctx, make_var(std::move(x)));
      auto loss = ops::softmax_cross_entropy(tape, logits, labels);
      const double l = loss->value[0];
      if (!std::isfinite(l)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      loss_sum += l * static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) {
        correct += argmax_row(logits->value, static_cast<int>(i)) == labels[i] ? 1 : 0;
      }
      store.zero_grad();
      tape.backward(loss);
      sgd_nesterov_step(store, lr, cfg.momentum, cfg.weight_decay);
    }

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(n);
    log.train_running_top1 = static_cast<double>(correct) / static_cast<double>(n);
    log.train_top1 = evaluate(model, train_set, cfg.eval_batch_size).fine.top1;
    const Evaluation val = evaluate(model, val_set, cfg.eval_batch_size);
    log.val_top1 = val.fine.top1;
    log.val_macro_precision = val.fine.macro_precision;
    log.val_macro_recall = val.fine.macro_recall;
    log.val_macro_f1 = val.fine.macro_f1;
    log.val_coarse_top1 = val.coarse.top1;
    if (log.val_top1 > result.best_val_top1) {
      log.best = true;
      result.best_epoch = epoch;
      result.best_val_top1 = log.val_top1;
      result.best_checkpoint = serialize_state(store.state());
    }
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

template Evaluation evaluate<float>(const ApnModel<float>&, const Dataset&, int);
template Evaluation evaluate<double>(const ApnModel<double>&, const Dataset&, int);
template Tensor<float> gather_batch<float>(const Dataset&, const std::vector<std::size_t>&, std::size_t, std::size_t);
template Tensor<double> gather_batch<double>(const Dataset&, const std::vector<std::size_t>&, std::size_t,
                                             std::size_t);

}  // namespace apn
