#pragma once

// Classification metrics. Confusion matrices have true labels on rows and
// predictions on columns.
//
// Two classes: sensitivity, precision, recall and f1 refer to class 1 and
// specificity is the recall of class 0. More classes: sensitivity,
// specificity and precision are one-vs-rest macro averages, recall equals
// sensitivity and f1 equals macro_f1. Undefined ratios (0/0) count as 0.

#include "brantx/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <vector>

namespace brantx {

using Json = nlohmann::json;
using ConfusionMatrix = Eigen::MatrixXi;

struct EvalReport {
  int n_classes = 0;
  double accuracy = 0;
  double sensitivity = 0;
  double specificity = 0;
  double macro_f1 = 0;
  double kappa = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double pr_auc = 0;
  ConfusionMatrix confusion;
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& labels, const std::vector<int>& predictions,
                                        int n_classes) {
  require(labels.size() == predictions.size(), "confusion_matrix: label and prediction counts differ");
  require(n_classes >= 2, "confusion_matrix: need at least 2 classes");
  ConfusionMatrix cm = ConfusionMatrix::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < n_classes,
            "label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(n_classes) + ")");
    require(predictions[i] >= 0 && predictions[i] < n_classes, "prediction outside the class range");
    ++cm(labels[i], predictions[i]);
  }
  return cm;
}

namespace detail {
inline double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }
}  // namespace detail

// Cohen's kappa, (p_o - p_e) / (1 - p_e). When p_e = 1 every sample sits in
// one class on both axes, so agreement is perfect and kappa is 1.
inline double cohen_kappa(const ConfusionMatrix& cm) {
  const double n = cm.sum();
  require(n > 0, "kappa: empty confusion matrix");
  const double po = cm.trace() / n;
  double pe = 0;
  for (Index c = 0; c < cm.rows(); ++c) pe += (cm.row(c).sum() / n) * (cm.col(c).sum() / n);
  if (pe >= 1.0) return 1.0;
  return (po - pe) / (1.0 - pe);
}

// Every metric except pr_auc, from the confusion matrix alone.
inline EvalReport report_from_confusion(const ConfusionMatrix& cm) {
  require(cm.rows() == cm.cols() && cm.rows() >= 2, "confusion matrix must be square with >= 2 classes");
  const int k = static_cast<int>(cm.rows());
  const double n = cm.sum();
  require(n > 0, "confusion matrix is empty");
  std::vector<double> sens(k), spec(k), prec(k), f1(k);
  for (int c = 0; c < k; ++c) {
    const double tp = cm(c, c);
    const double fn = cm.row(c).sum() - tp;
    const double fp = cm.col(c).sum() - tp;
    const double tn = n - tp - fn - fp;
    sens[c] = detail::ratio(tp, tp + fn);
    spec[c] = detail::ratio(tn, tn + fp);
    prec[c] = detail::ratio(tp, tp + fp);
    f1[c] = detail::ratio(2 * tp, 2 * tp + fp + fn);
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  EvalReport r;
  r.n_classes = k;
  r.confusion = cm;
  r.accuracy = cm.trace() / n;
  r.kappa = cohen_kappa(cm);
  r.macro_f1 = mean(f1);
  if (k == 2) {
    r.sensitivity = sens[1];
    r.specificity = sens[0];
    r.precision = prec[1];
    r.recall = sens[1];
    r.f1 = f1[1];
  } else {
    r.sensitivity = mean(sens);
    r.specificity = mean(spec);
    r.precision = mean(prec);
    r.recall = r.sensitivity;
    r.f1 = r.macro_f1;
  }
  return r;
}

// Area under the precision-recall curve of one binary problem by trapezoids
// over recall. The curve starts at (recall 0, precision 1) and adds one
// point per distinct score threshold, highest first. NaN when there are no
// positives.
inline double pr_auc_binary(const std::vector<double>& scores, const std::vector<bool>& positive) {
  require(scores.size() == positive.size(), "pr_auc: score and label counts differ");
  const double n_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  if (n_pos == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0, fp = 0, prev_recall = 0, prev_precision = 1, area = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (positive[order[i]] ? tp : fp) += 1;
    const double recall = tp / n_pos;
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
    prev_recall = recall;
    prev_precision = precision;
  }
  return area;
}

// Macro one-vs-rest PR-AUC over classes that have at least one positive.
// scores is N x n_classes.
inline double pr_auc_macro(const std::vector<int>& labels, const Matrix& scores) {
  require(static_cast<Index>(labels.size()) == scores.rows(), "pr_auc: one score row per label required");
  double sum = 0;
  int used = 0;
  for (Index c = 0; c < scores.cols(); ++c) {
    std::vector<double> s(labels.size());
    std::vector<bool> pos(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = scores(static_cast<Index>(i), c);
      pos[i] = labels[i] == c;
    }
    const double a = pr_auc_binary(s, pos);
    if (std::isnan(a)) continue;
    sum += a;
    ++used;
  }
  return used ? sum / used : 0.0;
}

inline EvalReport evaluate(const std::vector<int>& labels, const std::vector<int>& predictions, const Matrix& scores,
                           int n_classes) {
  EvalReport r = report_from_confusion(confusion_matrix(labels, predictions, n_classes));
  if (scores.size() > 0) r.pr_auc = pr_auc_macro(labels, scores);
  return r;
}

inline Json to_json(const EvalReport& r) {
  Json cm = Json::array();
  for (Index i = 0; i < r.confusion.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < r.confusion.cols(); ++j) row.push_back(r.confusion(i, j));
    cm.push_back(std::move(row));
  }
  return {{"n_classes", r.n_classes}, {"accuracy", r.accuracy}, {"sensitivity", r.sensitivity},
          {"specificity", r.specificity}, {"macro_f1", r.macro_f1}, {"kappa", r.kappa},
          {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"pr_auc", r.pr_auc}, {"confusion_matrix", cm}};
}

inline ConfusionMatrix confusion_from_json(const Json& j) {
  const auto& rows = j.at("confusion_matrix");
  const Index k = static_cast<Index>(rows.size());
  ConfusionMatrix cm(k, k);
  for (Index i = 0; i < k; ++i) {
    require(static_cast<Index>(rows[i].size()) == k, "confusion_matrix is not square");
    for (Index c = 0; c < k; ++c) cm(i, c) = rows[i][c].get<int>();
  }
  return cm;
}

}  // namespace brantx
