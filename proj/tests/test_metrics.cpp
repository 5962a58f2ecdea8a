#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"

#include "aap/metrics.hpp"

using namespace aap;

namespace {

Eigen::MatrixXi mat(const std::vector<std::vector<int>>& rows) {
  Eigen::MatrixXi m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

Eigen::MatrixXd dmat(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

}  // namespace

TEST_CASE("binarize applies per-column thresholds inclusively") {
  const Eigen::MatrixXd scores = dmat({{0.53, 0.47}, {0.2, 0.5}});
  const Eigen::MatrixXi at_half = binarize(scores, 0.5);
  CHECK(at_half(0, 0) == 1);
  CHECK(at_half(0, 1) == 0);
  CHECK(at_half(1, 0) == 0);
  CHECK(at_half(1, 1) == 1);  // equality counts as positive
  CHECK(binarize(scores, 0.0).sum() == 4);
  CHECK(binarize(scores, 1.01).sum() == 0);

  Eigen::VectorXd thresholds(2);
  thresholds << 0.5, 0.49;
  const Eigen::MatrixXi mixed = binarize(scores, thresholds);
  CHECK(mixed(1, 1) == 1);
  CHECK(mixed(0, 1) == 0);

  Eigen::VectorXd wrong(3);
  wrong.setConstant(0.5);
  CHECK_THROWS_AS(binarize(scores, wrong), DimensionError);
}

TEST_CASE("mean accuracy on simple cases") {
  const Eigen::MatrixXi labels = mat({{1, 0}, {0, 1}, {1, 0}, {0, 1}});
  CHECK(mean_accuracy(labels, labels) == 1.0);
  // Predicting everything positive: TPR 1, TNR 0 for both attributes.
  const Eigen::MatrixXi ones = Eigen::MatrixXi::Ones(4, 2);
  CHECK(mean_accuracy(ones, labels) == 0.5);
  const Eigen::MatrixXi flipped = (1 - labels.array()).matrix();
  CHECK(mean_accuracy(flipped, labels) == 0.0);
}

TEST_CASE("mean accuracy matches a brute-force recount on random data") {
  std::mt19937_64 rng(17);
  std::bernoulli_distribution bit(0.4);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 50, k = 6;
    Eigen::MatrixXi preds(n, k), labels(n, k);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < k; ++c) {
        preds(r, c) = bit(rng) ? 1 : 0;
        labels(r, c) = bit(rng) ? 1 : 0;
      }
    double expected = 0.0;
    for (int j = 0; j < k; ++j) {
      double tp = 0, fn = 0, tn = 0, fp = 0;
      for (int i = 0; i < n; ++i) {
        if (labels(i, j) == 1)
          (preds(i, j) == 1 ? tp : fn) += 1.0;
        else
          (preds(i, j) == 0 ? tn : fp) += 1.0;
      }
      double term = 0.0;
      if (tp + fn > 0) term += 0.5 * tp / (tp + fn);
      if (tn + fp > 0) term += 0.5 * tn / (tn + fp);
      expected += term / k;
    }
    CHECK(mean_accuracy(preds, labels) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("one-class attributes contribute only the defined half") {
  // Attribute 0 is always positive, attribute 1 is balanced.
  const Eigen::MatrixXi labels = mat({{1, 0}, {1, 1}});
  const Eigen::MatrixXi preds = mat({{1, 0}, {1, 1}});
  // Attribute 0: TPR = 1, no negatives -> term 0.5. Attribute 1: perfect -> 1.
  CHECK(mean_accuracy(preds, labels) == doctest::Approx(0.75));
}

TEST_CASE("per-attribute balanced accuracy halves sum to one under complement") {
  std::mt19937_64 rng(23);
  std::bernoulli_distribution bit(0.5);
  const int n = 40, k = 5;
  Eigen::MatrixXi preds(n, k), labels(n, k);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < k; ++c) {
      preds(r, c) = bit(rng) ? 1 : 0;
      labels(r, c) = bit(rng) ? 1 : 0;
    }
  // Force both classes to appear in every attribute.
  for (int c = 0; c < k; ++c) {
    labels(0, c) = 1;
    labels(1, c) = 0;
  }
  const Eigen::MatrixXi complement = (1 - preds.array()).matrix();
  const double direct = mean_accuracy(preds, labels);
  const double flipped = mean_accuracy(complement, labels);
  // TPR of the complement is 1 - TPR, likewise TNR, so the two mA sum to 1.
  CHECK(direct + flipped == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("example-based metrics on the worked triple") {
  // One instance: pred {a}, truth {a, b}.
  const Eigen::MatrixXi preds = mat({{1, 0}});
  const Eigen::MatrixXi labels = mat({{1, 1}});
  const ExampleBasedMetrics e = example_based(preds, labels);
  CHECK(e.accuracy == doctest::Approx(0.5));
  CHECK(e.precision == doctest::Approx(1.0));
  CHECK(e.recall == doctest::Approx(0.5));
  CHECK(e.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("example-based metrics across instances") {
  // Instance 1: pred {0}, truth {0,1} -> acc 1/2, prec 1, rec 1/2.
  // Instance 2: pred {}, truth {1} -> acc 0, prec 0, rec 0.
  // Instance 3: pred {0,1}, truth {0,1} -> all 1.
  const Eigen::MatrixXi preds = mat({{1, 0}, {0, 0}, {1, 1}});
  const Eigen::MatrixXi labels = mat({{1, 1}, {0, 1}, {1, 1}});
  const ExampleBasedMetrics e = example_based(preds, labels);
  CHECK(e.accuracy == doctest::Approx(0.5));
  CHECK(e.precision == doctest::Approx(2.0 / 3.0));
  CHECK(e.recall == doctest::Approx(0.5));
  const double expected_f1 =
      2.0 * e.precision * e.recall / (e.precision + e.recall);
  CHECK(e.f1 == doctest::Approx(expected_f1));
  // f1 never exceeds either average.
  CHECK(e.f1 <= std::max(e.precision, e.recall) + 1e-15);
}

TEST_CASE("perfect and disjoint predictions") {
  const Eigen::MatrixXi labels = mat({{1, 0}, {0, 1}});
  const ExampleBasedMetrics perfect = example_based(labels, labels);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1 == 1.0);
  const Eigen::MatrixXi disjoint = mat({{0, 1}, {1, 0}});
  const ExampleBasedMetrics zero = example_based(disjoint, labels);
  CHECK(zero.accuracy == 0.0);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);
}

TEST_CASE("metrics are invariant under a consistent column permutation") {
  std::mt19937_64 rng(29);
  std::bernoulli_distribution bit(0.45);
  const int n = 30, k = 6;
  Eigen::MatrixXi preds(n, k), labels(n, k);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < k; ++c) {
      preds(r, c) = bit(rng) ? 1 : 0;
      labels(r, c) = bit(rng) ? 1 : 0;
    }
  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Eigen::MatrixXi preds_p(n, k), labels_p(n, k);
  for (int c = 0; c < k; ++c) {
    preds_p.col(c) = preds.col(perm[static_cast<std::size_t>(c)]);
    labels_p.col(c) = labels.col(perm[static_cast<std::size_t>(c)]);
  }
  CHECK(mean_accuracy(preds, labels) ==
        doctest::Approx(mean_accuracy(preds_p, labels_p)).epsilon(1e-12));
  const ExampleBasedMetrics a = example_based(preds, labels);
  const ExampleBasedMetrics b = example_based(preds_p, labels_p);
  CHECK(a.accuracy == doctest::Approx(b.accuracy).epsilon(1e-12));
  CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-12));
}

TEST_CASE("degenerate evaluation inputs are rejected") {
  Eigen::MatrixXi empty(0, 2);
  CHECK_THROWS_AS(mean_accuracy(empty, empty), DomainError);
  const Eigen::MatrixXi a = mat({{1, 0}});
  const Eigen::MatrixXi b = mat({{1, 0, 1}});
  CHECK_THROWS_AS(mean_accuracy(a, b), DimensionError);
  CHECK_THROWS_AS(example_based(a, b), DimensionError);
  Eigen::MatrixXi bad = a;
  bad(0, 0) = 2;
  CHECK_THROWS_AS(mean_accuracy(bad, a), DomainError);
}

TEST_CASE("threshold calibration finds the separating value") {
  // Scores separate cleanly between 0.3 and 0.8; the smallest candidate
  // achieving balanced accuracy 1 is the positive score 0.8.
  const Eigen::MatrixXd scores = dmat({{0.9}, {0.8}, {0.3}, {0.1}});
  const Eigen::MatrixXi labels = mat({{1}, {1}, {0}, {0}});
  const Eigen::VectorXd thresholds = calibrate_thresholds(scores, labels);
  CHECK(thresholds(0) == doctest::Approx(0.8));
  const Eigen::MatrixXi preds = binarize(scores, thresholds);
  CHECK(mean_accuracy(preds, labels) == 1.0);
}

TEST_CASE("calibrated thresholds never lose to a fixed default") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::bernoulli_distribution bit(0.35);
  const int n = 60, k = 4;
  Eigen::MatrixXd scores(n, k);
  Eigen::MatrixXi labels(n, k);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < k; ++c) {
      labels(r, c) = bit(rng) ? 1 : 0;
      // Correlated but noisy scores.
      scores(r, c) = 0.4 * labels(r, c) + 0.6 * unit(rng);
    }
  const Eigen::VectorXd calibrated = calibrate_thresholds(scores, labels);
  const double tuned = mean_accuracy(binarize(scores, calibrated), labels);
  const double fixed = mean_accuracy(binarize(scores, 0.5), labels);
  CHECK(tuned >= fixed - 1e-12);
}

TEST_CASE("calibration handles a one-class attribute deterministically") {
  const Eigen::MatrixXd scores = dmat({{0.2}, {0.6}, {0.9}});
  const Eigen::MatrixXi labels = mat({{0}, {0}, {0}});
  const Eigen::VectorXd thresholds = calibrate_thresholds(scores, labels);
  // Best balanced accuracy is the all-negative prediction.
  CHECK(binarize(scores, thresholds).sum() == 0);
}

TEST_CASE("full report carries per-attribute statistics") {
  const Eigen::MatrixXd scores = dmat({{0.9, 0.1}, {0.8, 0.7}, {0.2, 0.6}});
  const Eigen::MatrixXi labels = mat({{1, 0}, {1, 1}, {0, 1}});
  Eigen::VectorXd thresholds(2);
  thresholds << 0.5, 0.5;
  const MetricsReport report =
      evaluate(scores, labels, thresholds, {"first", "second"});
  REQUIRE(report.per_attribute.size() == 2);
  CHECK(report.per_attribute[0].name == "first");
  CHECK(report.per_attribute[0].positives == 2);
  CHECK(report.per_attribute[0].negatives == 1);
  CHECK(report.per_attribute[0].tpr == 1.0);
  CHECK(report.per_attribute[0].tnr == 1.0);
  CHECK(report.mean_acc == 1.0);
  const std::string table = report.table();
  CHECK(table.find("first") != std::string::npos);
  CHECK(table.find("mA") != std::string::npos);
  const std::string csv = report.summary_csv();
  CHECK(csv.find("metric,value") == 0);
  CHECK(csv.find("example_f1,") != std::string::npos);
  const std::string per_attr = report.per_attribute_csv();
  CHECK(per_attr.find("attribute,positives,") == 0);
  CHECK(std::count(per_attr.begin(), per_attr.end(), '\n') == 3);
}
