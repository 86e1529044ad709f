#ifndef DERM_METRICS_HPP
#define DERM_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace derm {

// Positive class = malignant = 1.
struct ConfusionMatrix {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }
};

struct BasicMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Full report: malignant-positive metrics, per-class metrics, and
// support-weighted variants.
struct MetricsReport {
  double accuracy = 0.0;
  BasicMetrics malignant;      // class 1 treated as positive
  BasicMetrics non_malignant;  // class 0 treated as positive
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double auc_roc = 0.0;
  bool has_auc = false;
  std::int64_t support0 = 0;
  std::int64_t support1 = 0;
  ConfusionMatrix cm;
};

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels);

// Eq definitions with the 0/0 -> 0 convention for empty denominators.
BasicMetrics basic_metrics(const ConfusionMatrix& cm);

// Support-weighted average of a per-class metric pair.
double weighted_metric(double metric_class0, double metric_class1, std::int64_t support0,
                       std::int64_t support1);

// Mann-Whitney AUC: ties count half. Throws on single-class input.
double auc_roc(const std::vector<double>& probabilities, const std::vector<int>& labels);

// Thresholds probabilities (ties -> malignant) and assembles the report.
// AUC is included only when both classes are present.
MetricsReport evaluate_metrics(const std::vector<double>& probabilities,
                               const std::vector<int>& labels, double threshold = 0.5);

std::string metrics_report_json(const MetricsReport& report);

// 2x2 CSV, rows = actual, columns = predicted, non-malignant first.
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace derm

#endif
