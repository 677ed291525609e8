#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace brantx;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

// Textbook definitions, straight from counts.
double kappa_ref(const ConfusionMatrix& cm) {
  const double n = cm.sum();
  double po = 0, pe = 0;
  for (Index c = 0; c < cm.rows(); ++c) {
    po += cm(c, c);
    pe += static_cast<double>(cm.row(c).sum()) * cm.col(c).sum();
  }
  po /= n;
  pe /= n * n;
  return (po - pe) / (1 - pe);
}

double macro_f1_ref(const ConfusionMatrix& cm) {
  double s = 0;
  for (Index c = 0; c < cm.rows(); ++c) {
    const double tp = cm(c, c), p = cm.col(c).sum(), t = cm.row(c).sum();
    const double prec = p ? tp / p : 0, rec = t ? tp / t : 0;
    s += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
  }
  return s / static_cast<double>(cm.rows());
}

}  // namespace

TEST_CASE("binary report from a worked confusion matrix", "[metrics]") {
  ConfusionMatrix cm(2, 2);
  cm << 40, 10, 5, 45;
  const EvalReport r = report_from_confusion(cm);
  CHECK_THAT(r.accuracy, WithinAbs(0.85, 1e-12));
  CHECK_THAT(r.kappa, WithinAbs(0.7, 1e-12));
  CHECK_THAT(r.macro_f1, WithinAbs((80.0 / 95 + 90.0 / 105) / 2, 1e-12));
  CHECK_THAT(r.precision, WithinAbs(45.0 / 55, 1e-12));
  CHECK_THAT(r.recall, WithinAbs(0.9, 1e-12));
  CHECK_THAT(r.sensitivity, WithinAbs(0.9, 1e-12));
  CHECK_THAT(r.specificity, WithinAbs(0.8, 1e-12));
  CHECK_THAT(r.f1, WithinAbs(90.0 / 105, 1e-12));
}

TEST_CASE("perfect and constant predictors", "[metrics]") {
  const std::vector<int> y{0, 1, 2, 2, 1, 0, 1};
  const EvalReport perfect = report_from_confusion(confusion_matrix(y, y, 3));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.kappa == 1.0);
  CHECK(perfect.macro_f1 == 1.0);
  CHECK(perfect.specificity == 1.0);

  const EvalReport constant = report_from_confusion(confusion_matrix(y, std::vector<int>(y.size(), 1), 3));
  CHECK_THAT(constant.kappa, WithinAbs(0.0, 1e-12));
  CHECK_THAT(constant.accuracy, WithinAbs(3.0 / 7, 1e-12));

  // Everything in one class on both axes: agreement is perfect.
  ConfusionMatrix one = ConfusionMatrix::Zero(2, 2);
  one(1, 1) = 9;
  CHECK(cohen_kappa(one) == 1.0);
}

TEST_CASE("report agrees with textbook formulas on random matrices", "[metrics]") {
  Rng rng(17);
  std::uniform_int_distribution<int> cell(0, 30), classes(2, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = classes(rng);
    ConfusionMatrix cm(k, k);
    for (Index i = 0; i < cm.size(); ++i) cm.data()[i] = cell(rng);
    cm(0, 0) += 1;  // never empty
    const EvalReport r = report_from_confusion(cm);
    CHECK_THAT(r.accuracy, WithinAbs(static_cast<double>(cm.trace()) / cm.sum(), 1e-12));
    CHECK_THAT(r.macro_f1, WithinAbs(macro_f1_ref(cm), 1e-12));
    CHECK_THAT(r.kappa, WithinAbs(kappa_ref(cm), 1e-12));
    CHECK(r.kappa <= 1.0 + 1e-12);
    CHECK(r.kappa >= -1.0 - 1e-12);
    if (k > 2) CHECK(r.f1 == r.macro_f1);
  }
}

TEST_CASE("diagonal confusion matrices give kappa 1", "[metrics]") {
  Rng rng(3);
  std::uniform_int_distribution<int> cell(1, 50);
  for (int k = 2; k <= 6; ++k) {
    ConfusionMatrix cm = ConfusionMatrix::Zero(k, k);
    for (int c = 0; c < k; ++c) cm(c, c) = cell(rng);
    CHECK_THAT(cohen_kappa(cm), WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("PR-AUC by trapezoids over recall", "[metrics]") {
  // Points: (0,1) (.5,1) (.5,.5) (1,2/3) (1,.5).
  CHECK_THAT(pr_auc_binary({.9, .8, .7, .6}, {true, false, true, false}), WithinAbs(19.0 / 24, 1e-12));
  CHECK_THAT(pr_auc_binary({.9, .8}, {true, true}), WithinAbs(1.0, 1e-12));
  // A tie is a single threshold: (0,1) -> (1, .5).
  CHECK_THAT(pr_auc_binary({.5, .5}, {true, false}), WithinAbs(0.75, 1e-12));
  CHECK(std::isnan(pr_auc_binary({.1, .2}, {false, false})));

  Matrix scores(4, 2);
  scores << .1, .9, .2, .8, .3, .7, .4, .6;
  const double macro = pr_auc_macro({1, 0, 1, 0}, scores);
  const double c1 = pr_auc_binary({.9, .8, .7, .6}, {true, false, true, false});
  const double c0 = pr_auc_binary({.1, .2, .3, .4}, {false, true, false, true});
  CHECK_THAT(macro, WithinAbs((c0 + c1) / 2, 1e-12));
}

TEST_CASE("label range errors are reported", "[metrics]") {
  CHECK_THROWS_WITH(confusion_matrix({0, 3}, {0, 1}, 3), ContainsSubstring("label 3"));
  CHECK_THROWS_AS(confusion_matrix({0}, {0, 1}, 2), ValidationError);
  CHECK_THROWS_AS(report_from_confusion(ConfusionMatrix::Zero(2, 2)), ValidationError);
}

TEST_CASE("report JSON carries the confusion matrix", "[metrics]") {
  ConfusionMatrix cm(3, 3);
  cm << 5, 1, 0, 2, 7, 1, 0, 0, 9;
  const EvalReport r = report_from_confusion(cm);
  const Json j = to_json(r);
  CHECK(j.at("n_classes") == 3);
  CHECK(confusion_from_json(j) == cm);
  CHECK_THAT(j.at("kappa").get<double>(), WithinAbs(r.kappa, 0));
  CHECK(report_from_confusion(confusion_from_json(Json::parse(j.dump()))).macro_f1 == r.macro_f1);
}
