#include "derm/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "derm/error.hpp"

namespace derm {

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw ShapeError("confusion: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((predictions[i] != 0 && predictions[i] != 1) || (labels[i] != 0 && labels[i] != 1))
      throw ConfigError("confusion: entries must be 0/1 (index " + std::to_string(i) + ")");
    if (labels[i] == 1)
      (predictions[i] == 1 ? cm.tp : cm.fn)++;
    else
      (predictions[i] == 1 ? cm.fp : cm.tn)++;
  }
  return cm;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double precision, double recall) {
  return (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

}  // namespace

BasicMetrics basic_metrics(const ConfusionMatrix& cm) {
  if (cm.total() < 1) throw ConfigError("basic_metrics: empty confusion matrix");
  BasicMetrics m;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  m.f1 = f1_of(m.precision, m.recall);
  return m;
}

double weighted_metric(double metric_class0, double metric_class1, std::int64_t support0,
                       std::int64_t support1) {
  if (support0 < 0 || support1 < 0 || support0 + support1 == 0)
    throw ConfigError("weighted_metric: supports must be nonnegative with a positive total");
  return (static_cast<double>(support0) * metric_class0 +
          static_cast<double>(support1) * metric_class1) /
         static_cast<double>(support0 + support1);
}

double auc_roc(const std::vector<double>& probabilities, const std::vector<int>& labels) {
  if (probabilities.size() != labels.size())
    throw ShapeError("auc_roc: score/label length mismatch");
  std::int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw ConfigError("auc_roc: undefined, both classes must be present");
  // Rank formulation with average ranks for ties; equals pair counting with
  // ties scored 0.5.
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return probabilities[a] < probabilities[b]; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && probabilities[order[j + 1]] == probabilities[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport evaluate_metrics(const std::vector<double>& probabilities,
                               const std::vector<int>& labels, double threshold) {
  std::vector<int> preds(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i)
    preds[i] = probabilities[i] >= threshold ? 1 : 0;
  MetricsReport r;
  r.cm = confusion(preds, labels);
  r.malignant = basic_metrics(r.cm);
  r.accuracy = r.malignant.accuracy;
  // Non-malignant as positive is the transposed matrix.
  ConfusionMatrix inv{r.cm.tn, r.cm.tp, r.cm.fn, r.cm.fp};
  r.non_malignant = basic_metrics(inv);
  r.support0 = r.cm.tn + r.cm.fp;
  r.support1 = r.cm.tp + r.cm.fn;
  r.weighted_precision =
      weighted_metric(r.non_malignant.precision, r.malignant.precision, r.support0, r.support1);
  r.weighted_recall =
      weighted_metric(r.non_malignant.recall, r.malignant.recall, r.support0, r.support1);
  r.weighted_f1 = weighted_metric(r.non_malignant.f1, r.malignant.f1, r.support0, r.support1);
  if (r.support0 > 0 && r.support1 > 0) {
    r.auc_roc = auc_roc(probabilities, labels);
    r.has_auc = true;
  }
  return r;
}

std::string metrics_report_json(const MetricsReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["precision"] = r.malignant.precision;
  j["recall"] = r.malignant.recall;
  j["f1"] = r.malignant.f1;
  j["per_class"]["malignant"] = {{"precision", r.malignant.precision},
                                 {"recall", r.malignant.recall},
                                 {"f1", r.malignant.f1},
                                 {"support", r.support1}};
  j["per_class"]["non_malignant"] = {{"precision", r.non_malignant.precision},
                                     {"recall", r.non_malignant.recall},
                                     {"f1", r.non_malignant.f1},
                                     {"support", r.support0}};
  j["weighted"]["precision"] = r.weighted_precision;
  j["weighted"]["recall"] = r.weighted_recall;
  j["weighted"]["f1"] = r.weighted_f1;
  if (r.has_auc) j["auc_roc"] = r.auc_roc;
  j["confusion"] = {{"tp", r.cm.tp}, {"tn", r.cm.tn}, {"fp", r.cm.fp}, {"fn", r.cm.fn}};
  return j.dump(2) + "\n";
}

std::string confusion_csv(const ConfusionMatrix& cm) {
  std::ostringstream os;
  os << "actual\\predicted,non_malignant,malignant\n";
  os << "non_malignant," << cm.tn << "," << cm.fp << "\n";
  os << "malignant," << cm.fn << "," << cm.tp << "\n";
  return os.str();
}

}  // namespace derm
