#include "chatter/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>

#include "chatter/error.hpp"

namespace chatter {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace

std::size_t ConfusionMatrix::total() const noexcept {
  std::size_t t = 0;
  for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), std::size_t{0});
  return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t true_class) const noexcept {
  const auto& row = counts[true_class];
  return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::column_sum(std::size_t predicted_class) const noexcept {
  std::size_t t = 0;
  for (const auto& row : counts) t += row[predicted_class];
  return t;
}

ConfusionMatrix confusion(std::span<const MachiningClass> predicted,
                          std::span<const MachiningClass> labels) {
  if (predicted.size() != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, std::to_string(predicted.size()) + " predictions vs " +
                                               std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw Error(ErrorKind::Empty, "no predictions");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    cm.counts[class_index(labels[i])][class_index(predicted[i])] += 1;
  }
  return cm;
}

ConfusionMatrix confusion(std::span<const Prediction> predictions,
                          std::span<const MachiningClass> labels) {
  std::vector<MachiningClass> predicted(predictions.size());
  std::transform(predictions.begin(), predictions.end(), predicted.begin(),
                 [](const Prediction& p) { return p.predicted; });
  return confusion(std::span<const MachiningClass>(predicted), labels);
}

ClassMetrics class_metrics(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw Error(ErrorKind::EmptyMatrix, "confusion matrix is empty");
  ClassMetrics m;
  std::size_t trace = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& pc = m.per_class[c];
    const std::size_t tp = cm.counts[c][c];
    const std::size_t col = cm.column_sum(c);
    const std::size_t row = cm.row_sum(c);
    trace += tp;
    pc.support = row;
    pc.precision_undefined = col == 0;
    pc.recall_undefined = row == 0;
    pc.precision = col == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col);
    pc.recall = row == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row);
    const double sum = pc.precision + pc.recall;
    pc.f1 = sum > 0.0 ? 2.0 * pc.precision * pc.recall / sum : 0.0;
  }
  m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  return m;
}

RocCurve roc(std::span<const double> scores, std::span<const bool> is_positive,
             MachiningClass positive) {
  if (scores.size() != is_positive.size()) throw Error(ErrorKind::LengthMismatch, "scores vs labels");
  const auto n_pos = static_cast<std::size_t>(std::count(is_positive.begin(), is_positive.end(), true));
  const std::size_t n_neg = is_positive.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorKind::DegenerateClass,
                std::string(class_name(positive)) + " needs at least one positive and one negative");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.positive = positive;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == s; ++j) {
      if (is_positive[order[j]]) {
        ++tp;
      } else {
        ++fp;
      }
    }
    const RocPoint next{static_cast<double>(fp) / static_cast<double>(n_neg),
                        static_cast<double>(tp) / static_cast<double>(n_pos)};
    const RocPoint& prev = curve.points.back();
    area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    curve.points.push_back(next);
    i = j;
  }
  curve.auc = area;
  return curve;
}

RocCurve roc(std::span<const std::array<double, kNumClasses>> probabilities,
             std::span<const MachiningClass> labels, MachiningClass positive) {
  if (probabilities.size() != labels.size()) throw Error(ErrorKind::LengthMismatch, "scores vs labels");
  std::vector<double> scores(labels.size());
  // std::vector<bool> is not contiguous, so positives live in a plain array.
  auto positives = std::make_unique<bool[]>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    scores[i] = probabilities[i][class_index(positive)];
    positives[i] = labels[i] == positive;
  }
  return roc(scores, std::span<const bool>(positives.get(), labels.size()), positive);
}

EvaluationReport evaluate(std::span<const Prediction> predictions,
                          std::span<const MachiningClass> labels, std::string split,
                          std::string model_id, std::string timestamp) {
  EvaluationReport report;
  report.confusion = confusion(predictions, labels);
  report.metrics = class_metrics(report.confusion);
  std::vector<std::array<double, kNumClasses>> probs(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) probs[i] = predictions[i].probabilities;
  for (auto c : kAllClasses) {
    const auto support = report.confusion.row_sum(class_index(c));
    if (support == 0 || support == labels.size()) continue;
    report.roc_curves.push_back(roc(probs, labels, c));
  }
  report.split = std::move(split);
  report.model_id = std::move(model_id);
  report.timestamp = std::move(timestamp);
  return report;
}

void emit_report(const EvaluationReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string());

  std::string cm = "true\\predicted";
  for (auto c : kAllClasses) cm += "," + std::string(class_name(c));
  cm += "\n";
  for (auto t : kAllClasses) {
    cm += class_name(t);
    for (auto p : kAllClasses) cm += "," + std::to_string(report.confusion.counts[class_index(t)][class_index(p)]);
    cm += "\n";
  }
  write_file(dir / "confusion.csv", cm);

  std::string metrics = "class,precision,recall,f1,support\n";
  for (auto c : kAllClasses) {
    const auto& pc = report.metrics.per_class[class_index(c)];
    metrics += std::string(class_name(c)) + "," + fixed(pc.precision) + "," + fixed(pc.recall) + "," +
               fixed(pc.f1) + "," + std::to_string(pc.support) + "\n";
  }
  metrics += "accuracy,,," + fixed(report.metrics.accuracy) + "," +
             std::to_string(report.confusion.total()) + "\n";
  write_file(dir / "metrics.csv", metrics);

  for (const auto& curve : report.roc_curves) {
    std::string text = "# auc=" + fixed(curve.auc) + "\nfpr,tpr\n";
    for (const auto& p : curve.points) text += fixed(p.fpr) + "," + fixed(p.tpr) + "\n";
    write_file(dir / ("roc_" + std::string(class_name(curve.positive)) + ".csv"), text);
  }

  std::string summary;
  summary += "split=" + report.split + "\n";
  summary += "model=" + report.model_id + "\n";
  summary += "timestamp=" + report.timestamp + "\n";
  summary += "samples=" + std::to_string(report.confusion.total()) + "\n";
  summary += "accuracy=" + fixed(report.metrics.accuracy) + "\n";
  write_file(dir / "summary.txt", summary);
}

}  // namespace chatter
