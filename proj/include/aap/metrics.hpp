#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "aap/common.hpp"

namespace aap {

// preds(i,j) = scores(i,j) >= thresholds(j)
Eigen::MatrixXi binarize(const Eigen::MatrixXd& scores,
                         const Eigen::VectorXd& thresholds);
Eigen::MatrixXi binarize(const Eigen::MatrixXd& scores, double threshold);

// Per-attribute threshold maximizing balanced accuracy on the given set.
// Candidates are the observed score values plus one above the maximum;
// ties resolve to the smallest candidate, so the result is deterministic.
Eigen::VectorXd calibrate_thresholds(const Eigen::MatrixXd& scores,
                                     const Eigen::MatrixXi& labels);

// Mean over attributes of (TPR + TNR) / 2. Attributes missing one class on
// this set contribute only the defined half.
double mean_accuracy(const Eigen::MatrixXi& preds,
                     const Eigen::MatrixXi& labels);

struct ExampleBasedMetrics {
  double accuracy = 0.0;   // mean Jaccard overlap
  double precision = 0.0;  // mean |pred & true| / |pred|, 0 when pred empty
  double recall = 0.0;     // mean |pred & true| / |true|
  double f1 = 0.0;         // harmonic mean of the averaged precision/recall
};
ExampleBasedMetrics example_based(const Eigen::MatrixXi& preds,
                                  const Eigen::MatrixXi& labels);

struct AttributeStat {
  std::string name;
  long positives = 0;
  long negatives = 0;
  double tpr = 0.0;
  double tnr = 0.0;
  double balanced_accuracy = 0.0;
};

struct MetricsReport {
  double mean_acc = 0.0;
  ExampleBasedMetrics example;
  std::vector<AttributeStat> per_attribute;

  std::string table() const;
  std::string summary_csv() const;
  std::string per_attribute_csv() const;
};

MetricsReport evaluate(const Eigen::MatrixXd& scores,
                       const Eigen::MatrixXi& labels,
                       const Eigen::VectorXd& thresholds,
                       const std::vector<std::string>& names);

}  // namespace aap
