#include "apn/metrics.hpp"

#include <numeric>
#include <string>

#include "apn/errors.hpp"

namespace apn {

std::int64_t MetricsReport::total() const { return std::accumulate(confusion.begin(), confusion.end(), std::int64_t{0}); }

MetricsReport metrics_from_confusion(int num_classes, std::vector<std::int64_t> confusion) {
  const auto k = static_cast<std::size_t>(num_classes);
  if (num_classes < 1 || confusion.size() != k * k) {
    throw ShapeError("confusion matrix must be K x K for K = " + std::to_string(num_classes));
  }
  MetricsReport m;
  m.num_classes = num_classes;
  m.confusion = std::move(confusion);
  const std::int64_t total = m.total();
  if (total == 0) throw DomainError("metrics of an empty prediction set");

  std::int64_t correct = 0;
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t row = 0, col = 0;
    for (int j = 0; j < num_classes; ++j) {
      row += m.at(c, j);
      col += m.at(j, c);
    }
    const std::int64_t tp = m.at(c, c);
    correct += tp;
    if (row == 0) continue;
    ++present;
    const double p = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    const double r = static_cast<double>(tp) / static_cast<double>(row);
    p_sum += p;
    r_sum += r;
    f_sum += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  m.top1 = static_cast<double>(correct) / static_cast<double>(total);
  m.macro_precision = p_sum / present;
  m.macro_recall = r_sum / present;
  m.macro_f1 = f_sum / present;
  return m;
}

MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> pred, int num_classes) {
  if (truth.size() != pred.size()) throw ShapeError("truth and prediction counts differ");
  const auto k = static_cast<std::size_t>(num_classes);
  std::vector<std::int64_t> confusion(k * k, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes) {
      throw DomainError("label out of range [0, " + std::to_string(num_classes) + ") at index " + std::to_string(i));
    }
    ++confusion[static_cast<std::size_t>(truth[i]) * k + static_cast<std::size_t>(pred[i])];
  }
  return metrics_from_confusion(num_classes, std::move(confusion));
}

MetricsReport coarse_metrics(std::span<const int> truth, std::span<const int> pred, std::span<const int> coarse_of,
                             int num_coarse) {
  auto lift = [&](std::span<const int> fine) {
    std::vector<int> out;
    for (int v : fine) {
      if (v < 0 || static_cast<std::size_t>(v) >= coarse_of.size()) {
        throw DomainError("fine label " + std::to_string(v) + " has no coarse class");
      }
      out.push_back(coarse_of[static_cast<std::size_t>(v)]);
    }
    return out;
  };
  const std::vector<int> t = lift(truth), p = lift(pred);
  return compute_metrics(t, p, num_coarse);
}

}  // namespace apn
