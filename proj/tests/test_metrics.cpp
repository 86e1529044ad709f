#include <doctest.h>

#include <json.hpp>
#include <algorithm>

#include "derm/error.hpp"
#include "derm/metrics.hpp"
#include "derm/rng.hpp"

using namespace derm;

namespace {

// Independent recount: no reuse of the library's confusion counting.
BasicMetrics naive_metrics(const std::vector<int>& preds, const std::vector<int>& labels,
                           int positive) {
  double tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) correct += 1;
    if (preds[i] == positive && labels[i] == positive) tp += 1;
    if (preds[i] == positive && labels[i] != positive) fp += 1;
    if (preds[i] != positive && labels[i] == positive) fn += 1;
  }
  BasicMetrics m;
  m.accuracy = correct / static_cast<double>(preds.size());
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

// O(n^2) pair enumeration for the AUC.
double naive_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
  double pairs = 0, score = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      pairs += 1;
      if (probs[i] > probs[j]) score += 1;
      else if (probs[i] == probs[j]) score += 0.5;
    }
  return score / pairs;
}

}  // namespace

TEST_CASE("metrics match a naive recount on random vectors") {
  Rng rng(123);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 200;
    std::vector<int> preds(n), labels(n);
    std::vector<double> probs(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = rng.uniform();
      preds[i] = probs[i] >= 0.5 ? 1 : 0;
      labels[i] = rng.next_below(2) ? 1 : 0;
    }
    const auto report = evaluate_metrics(probs, labels);
    const auto pos = naive_metrics(preds, labels, 1);
    const auto neg = naive_metrics(preds, labels, 0);
    CHECK(report.accuracy == pos.accuracy);
    CHECK(report.malignant.precision == pos.precision);
    CHECK(report.malignant.recall == pos.recall);
    CHECK(report.malignant.f1 == pos.f1);
    CHECK(report.non_malignant.precision == neg.precision);
    CHECK(report.non_malignant.recall == neg.recall);

    double s0 = 0, s1 = 0;
    for (int l : labels) (l ? s1 : s0) += 1;
    CHECK(report.weighted_f1 == (s0 * neg.f1 + s1 * pos.f1) / (s0 + s1));
    // Weighted recall is a relabeling of accuracy.
    CHECK(std::abs(report.weighted_recall - report.accuracy) <= 1e-12);
  }
}

TEST_CASE("degenerate denominators yield zero, not errors") {
  // All predictions negative: precision for the positive class is 0/0.
  const auto report = evaluate_metrics({0.1, 0.2, 0.3}, {1, 1, 0});
  CHECK(report.malignant.precision == 0.0);
  CHECK(report.malignant.recall == 0.0);
  CHECK(report.malignant.f1 == 0.0);
}

TEST_CASE("auc matches exhaustive pair enumeration including ties") {
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.next_below(49);
    std::vector<double> probs(n);
    std::vector<int> labels(n);
    bool has0 = false, has1 = false;
    for (std::size_t i = 0; i < n; ++i) {
      // Quantized probabilities force ties.
      probs[i] = static_cast<double>(rng.next_below(8)) / 8.0;
      labels[i] = rng.next_below(2) ? 1 : 0;
      (labels[i] ? has1 : has0) = true;
    }
    if (!has0 || !has1) continue;
    CHECK(auc_roc(probs, labels) == naive_auc(probs, labels));
  }
}

TEST_CASE("auc of a perfect and a reversed ranking") {
  CHECK(auc_roc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == 1.0);
  CHECK(auc_roc({0.1, 0.2, 0.8, 0.9}, {1, 1, 0, 0}) == 0.0);
  CHECK_THROWS_AS(auc_roc({0.5, 0.6}, {1, 1}), ConfigError);
}

TEST_CASE("report json carries every field and the csv is a labeled 2x2") {
  const auto report = evaluate_metrics({0.9, 0.2, 0.7, 0.4}, {1, 0, 0, 1});
  const auto j = nlohmann::json::parse(metrics_report_json(report));
  for (const char* key : {"accuracy", "precision", "recall", "f1", "per_class", "weighted",
                          "auc_roc", "confusion"})
    CHECK(j.contains(key));
  CHECK(j["per_class"].contains("malignant"));
  CHECK(j["per_class"].contains("non_malignant"));
  CHECK(j["weighted"].contains("f1"));

  const auto csv = confusion_csv(report.cm);
  CHECK(csv.find("non_malignant") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("prediction threshold ties go to the malignant class") {
  const auto report = evaluate_metrics({0.5}, {1});
  CHECK(report.cm.tp == 1);
}
