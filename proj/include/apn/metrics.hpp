#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace apn {

/// Classification metrics from a K x K confusion matrix (rows are ground
/// truth, columns predictions).
///
/// Macro averages run over the classes present in the ground truth. A class
/// with no predicted positives has precision 0; F1 is 0 when P + R = 0.
struct MetricsReport {
  int num_classes = 0;
  std::vector<std::int64_t> confusion;  // row-major K x K
  double top1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;

  std::int64_t at(int truth, int pred) const {
    return confusion[static_cast<std::size_t>(truth) * num_classes + pred];
  }
  std::int64_t total() const;
};

MetricsReport metrics_from_confusion(int num_classes, std::vector<std::int64_t> confusion);
MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> pred, int num_classes);

// Collapses fine labels and predictions through `coarse_of` (fine -> coarse).
MetricsReport coarse_metrics(std::span<const int> truth, std::span<const int> pred, std::span<const int> coarse_of,
                             int num_coarse);

}  // namespace apn
