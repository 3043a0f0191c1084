#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "apn/data.hpp"
#include "apn/metrics.hpp"
#include "apn/model.hpp"

namespace apn {

struct TrainConfig {
  double lr0 = 0.1;
  std::vector<int> lr_decay_epochs{120, 200, 260};
  double lr_decay_factor = 0.2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 64;
  int epochs = 300;
  std::uint64_t seed = 0;
  bool augment = true;
  int augment_pad = 4;
  int eval_batch_size = 64;

  void validate() const;
};

/// Piecewise-constant schedule: lr0 * factor^(decay epochs <= epoch).
double lr_at(const TrainConfig& cfg, int epoch);

/// Fine and coarse predictions of a model over a dataset, in eval mode.
struct Evaluation {
  std::vector<int> predictions;
  MetricsReport fine;
  MetricsReport coarse;
  double loss = 0.0;
};

template <typename T>
Evaluation evaluate(const ApnModel<T>& model, const Dataset& data, int batch_size = 64);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;          // mean over augmented batches
  double train_running_top1 = 0.0;  // on augmented batches, during the epoch
  double train_top1 = 0.0;          // eval mode on the unaugmented train split
  double val_top1 = 0.0;
  double val_macro_precision = 0.0;
  double val_macro_recall = 0.0;
  double val_macro_f1 = 0.0;
  double val_coarse_top1 = 0.0;
  bool best = false;

  std::string json() const;  // one line, no trailing newline
};

struct TrainResult {
  std::vector<EpochLog> history;
  int best_epoch = -1;
  double best_val_top1 = -1.0;
  std::vector<std::uint8_t> best_checkpoint;
};

/// Nesterov SGD over shuffled mini-batches. Batch order, augmentation and
/// initialization all derive from cfg.seed. After every epoch both splits are
/// evaluated; the checkpoint with the highest validation top-1 is kept (the
/// earlier epoch wins ties). A non-finite loss throws TrainingError naming
/// the epoch and batch. `on_epoch` sees each log entry as it is produced.
TrainResult train(ApnModel<float>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Copies images [begin, begin + count) of `order` into an N x C x H x W tensor.
template <typename T>
Tensor<T> gather_batch(const Dataset& data, const std::vector<std::size_t>& order, std::size_t begin,
                       std::size_t count);

}  // namespace apn
