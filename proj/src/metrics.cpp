#include "cmxqe/metrics.hpp"

#include <cstdio>

#include "cmxqe/error.hpp"

namespace cmxqe::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t classes, int offset)
    : classes_(classes), offset_(offset), counts_(classes * classes, 0) {}

std::uint64_t ConfusionMatrix::row_sum(std::size_t k) const {
  std::uint64_t s = 0;
  for (std::size_t j = 0; j < classes_; ++j) s += at(k, j);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t k) const {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < classes_; ++i) s += at(i, k);
  return s;
}

std::uint64_t ConfusionMatrix::diagonal() const {
  std::uint64_t s = 0;
  for (std::size_t k = 0; k < classes_; ++k) s += at(k, k);
  return s;
}

void ConfusionMatrix::add(std::size_t true_class, std::size_t pred_class) {
  ++counts_[true_class * classes_ + pred_class];
  ++total_;
}

ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                 std::size_t classes, int offset) {
  if (y_true.size() != y_pred.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(y_true.size()) + " true labels vs " +
                                               std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw Error(ErrorKind::EmptyInput, "no labels to evaluate");
  ConfusionMatrix cm(classes, offset);
  const int hi = offset + static_cast<int>(classes) - 1;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    for (const int label : {y_true[i], y_pred[i]}) {
      if (label < offset || label > hi) {
        throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(label) + " at position " +
                                                    std::to_string(i) + " outside [" + std::to_string(offset) +
                                                    ", " + std::to_string(hi) + "]");
      }
    }
    cm.add(static_cast<std::size_t>(y_true[i] - offset), static_cast<std::size_t>(y_pred[i] - offset));
  }
  return cm;
}

double f1_score(const ConfusionMatrix& cm, Averaging averaging) {
  const std::size_t k = cm.classes();
  if (cm.total() == 0) return 0.0;
  if (averaging == Averaging::Micro) {
    // Single-label: global TP = diagonal, FP = FN = total - diagonal.
    return static_cast<double>(cm.diagonal()) / static_cast<double>(cm.total());
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double support = static_cast<double>(cm.row_sum(c));
    const double predicted = static_cast<double>(cm.col_sum(c));
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = support > 0 ? tp / support : 0.0;
    const double f1 = precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    sum += averaging == Averaging::Macro ? f1 : f1 * support;
  }
  return averaging == Averaging::Macro ? sum / static_cast<double>(k) : sum / static_cast<double>(cm.total());
}

double cohens_kappa(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorKind::EmptyInput, "kappa of an empty matrix");
  // kappa = (n * diag - S) / (n^2 - S), S = sum_k row_k * col_k.
  using wide = unsigned __int128;
  const wide n = cm.total();
  wide chance = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) chance += static_cast<wide>(cm.row_sum(c)) * cm.col_sum(c);
  const wide observed = n * cm.diagonal();
  const wide denom = n * n - chance;
  if (denom == 0) {
    if (observed == n * n) return 0.0;
    throw Error(ErrorKind::DegenerateDistribution, "expected agreement is 1 but observed agreement is not");
  }
  const double numer = observed >= chance ? static_cast<double>(observed - chance)
                                          : -static_cast<double>(chance - observed);
  return numer / static_cast<double>(denom);
}

double mse(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(y_true.size()) + " true labels vs " +
                                               std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw Error(ErrorKind::EmptyInput, "no labels to evaluate");
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const std::int64_t d = static_cast<std::int64_t>(y_true[i]) - y_pred[i];
    sum += d * d;
  }
  return static_cast<double>(sum) / static_cast<double>(y_true.size());
}

MetricReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, Task task) {
  const auto cm = confusion_matrix(y_true, y_pred, kNumClasses, label_offset(task));
  MetricReport report;
  report.task = task;
  report.n = y_true.size();
  report.f1_micro = f1_score(cm, Averaging::Micro);
  report.f1_macro = f1_score(cm, Averaging::Macro);
  report.f1_weighted = f1_score(cm, Averaging::Weighted);
  report.cohens_kappa = cohens_kappa(cm);
  report.mse = mse(y_true, y_pred);
  return report;
}

nlohmann::json MetricReport::to_json() const {
  return nlohmann::json{{"task", std::string(to_string(task))},
                        {"n", n},
                        {"f1_micro", f1_micro},
                        {"f1_macro", f1_macro},
                        {"f1_weighted", f1_weighted},
                        {"cohens_kappa", cohens_kappa},
                        {"mse", mse}};
}

MetricReport MetricReport::from_json(const nlohmann::json& doc) {
  MetricReport report;
  const auto task = parse_task(doc.at("task").get<std::string>());
  if (!task) throw Error(ErrorKind::InvalidArgument, "unknown task in metric report");
  report.task = *task;
  report.n = doc.at("n").get<std::size_t>();
  report.f1_micro = doc.at("f1_micro").get<double>();
  report.f1_macro = doc.at("f1_macro").get<double>();
  report.f1_weighted = doc.at("f1_weighted").get<double>();
  report.cohens_kappa = doc.at("cohens_kappa").get<double>();
  report.mse = doc.at("mse").get<double>();
  return report;
}

std::string MetricReport::to_display_json() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"task\": \"%s\", \"n\": %zu, \"f1_micro\": %.6f, \"f1_macro\": %.6f, "
                "\"f1_weighted\": %.6f, \"cohens_kappa\": %.6f, \"mse\": %.6f}",
                std::string(to_string(task)).c_str(), n, f1_micro, f1_macro, f1_weighted, cohens_kappa, mse);
  return buf;
}

}  // namespace cmxqe::metrics
