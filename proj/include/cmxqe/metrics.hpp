#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmxqe/common.hpp"

namespace cmxqe::metrics {

/// K x K counts, cell (i, j) = #{true == offset+i, pred == offset+j}.
class ConfusionMatrix {
 public:
  ConfusionMatrix(std::size_t classes, int offset);

  std::size_t classes() const { return classes_; }
  int offset() const { return offset_; }
  std::uint64_t total() const { return total_; }

  std::uint64_t at(std::size_t true_class, std::size_t pred_class) const {
    return counts_[true_class * classes_ + pred_class];
  }
  std::uint64_t row_sum(std::size_t k) const;
  std::uint64_t col_sum(std::size_t k) const;
  std::uint64_t diagonal() const;

  void add(std::size_t true_class, std::size_t pred_class);

 private:
  std::size_t classes_;
  int offset_;
  std::uint64_t total_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Throws LengthMismatch (unequal lengths), EmptyInput or LabelOutOfRange.
ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred,
                                 std::size_t classes = kNumClasses, int offset = 0);

enum class Averaging { Micro, Macro, Weighted };

/// Per-class precision and recall use 0 for 0/0, so absent classes add an F1
/// of 0 to the macro mean.
double f1_score(const ConfusionMatrix& cm, Averaging averaging);

/// Unweighted Cohen's kappa, computed from integer counts so a constant
/// predictor gives exactly 0. Returns 0 when expected agreement is 1 and
/// observed agreement is 1; throws DegenerateDistribution if expected is 1 and
/// observed is not.
double cohens_kappa(const ConfusionMatrix& cm);

/// Mean squared difference of the labels. Throws LengthMismatch or EmptyInput.
double mse(std::span<const int> y_true, std::span<const int> y_pred);

struct MetricReport {
  Task task = Task::Rating;
  std::size_t n = 0;
  double f1_micro = 0.0;
  double f1_macro = 0.0;
  double f1_weighted = 0.0;  // headline F1
  double cohens_kappa = 0.0;
  double mse = 0.0;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& doc);

  /// Fixed six-decimal rendering used by the CLI.
  std::string to_display_json() const;

  bool operator==(const MetricReport&) const = default;
};

/// Labels on the task's natural scale (rating 1..10, disagreement 0..9).
MetricReport evaluate(std::span<const int> y_true, std::span<const int> y_pred, Task task);

}  // namespace cmxqe::metrics
