#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "chatter/model.hpp"
#include "chatter/signal_io.hpp"

namespace chatter {

/// counts[true][predicted].
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  std::size_t total() const noexcept;
  std::size_t row_sum(std::size_t true_class) const noexcept;
  std::size_t column_sum(std::size_t predicted_class) const noexcept;

  bool operator==(const ConfusionMatrix&) const = default;
};

struct PerClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool precision_undefined = false;  // no predictions for the class
  bool recall_undefined = false;     // no true samples of the class

  bool operator==(const PerClassMetrics&) const = default;
};

struct ClassMetrics {
  std::array<PerClassMetrics, kNumClasses> per_class{};
  double accuracy = 0.0;

  bool operator==(const ClassMetrics&) const = default;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;

  bool operator==(const RocPoint&) const = default;
};

struct RocCurve {
  MachiningClass positive = MachiningClass::Chatter;
  std::vector<RocPoint> points;
  double auc = 0.0;

  bool operator==(const RocCurve&) const = default;
};

ConfusionMatrix confusion(std::span<const Prediction> predictions,
                          std::span<const MachiningClass> labels);
ConfusionMatrix confusion(std::span<const MachiningClass> predicted,
                          std::span<const MachiningClass> labels);

ClassMetrics class_metrics(const ConfusionMatrix& cm);

/// One-vs-rest ROC on the positive class probability. Tied scores move
/// together (one diagonal segment).
RocCurve roc(std::span<const std::array<double, kNumClasses>> probabilities,
             std::span<const MachiningClass> labels, MachiningClass positive);
RocCurve roc(std::span<const double> scores, std::span<const bool> is_positive,
             MachiningClass positive = MachiningClass::Chatter);

struct EvaluationReport {
  ConfusionMatrix confusion;
  ClassMetrics metrics;
  std::vector<RocCurve> roc_curves;  // classes lacking positives or negatives are omitted
  std::string split;
  std::string model_id;
  std::string timestamp;
};

/// Predictions and labels -> matrix, metrics and per-class ROC.
EvaluationReport evaluate(std::span<const Prediction> predictions,
                          std::span<const MachiningClass> labels, std::string split,
                          std::string model_id, std::string timestamp);

/// confusion.csv, metrics.csv, roc_<class>.csv and summary.txt.
void emit_report(const EvaluationReport& report, const std::filesystem::path& dir);

}  // namespace chatter
