#include "aap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace aap {

namespace {

void check_pair(Eigen::Index rows_a, Eigen::Index cols_a, Eigen::Index rows_b,
                Eigen::Index cols_b) {
  if (rows_a != rows_b || cols_a != cols_b)
    throw DimensionError("prediction and label shapes disagree: " +
                         std::to_string(rows_a) + "x" + std::to_string(cols_a) +
                         " vs " + std::to_string(rows_b) + "x" +
                         std::to_string(cols_b));
  if (rows_a < 1) throw DomainError("evaluation set is empty");
  if (cols_a < 1) throw DomainError("evaluation set has no attributes");
}

void check_binary(const Eigen::MatrixXi& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (m(r, c) != 0 && m(r, c) != 1)
        throw DomainError(std::string(what) + " entry at (" + std::to_string(r) +
                          "," + std::to_string(c) + ") is not 0/1");
}

}  // namespace

Eigen::MatrixXi binarize(const Eigen::MatrixXd& scores,
                         const Eigen::VectorXd& thresholds) {
  if (thresholds.size() != scores.cols())
    throw DimensionError("got " + std::to_string(thresholds.size()) +
                         " thresholds for " + std::to_string(scores.cols()) +
                         " score columns");
  Eigen::MatrixXi preds(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r)
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      preds(r, c) = scores(r, c) >= thresholds(c) ? 1 : 0;
  return preds;
}

Eigen::MatrixXi binarize(const Eigen::MatrixXd& scores, double threshold) {
  return binarize(scores,
                  Eigen::VectorXd::Constant(scores.cols(), threshold));
}

Eigen::VectorXd calibrate_thresholds(const Eigen::MatrixXd& scores,
                                     const Eigen::MatrixXi& labels) {
  check_pair(scores.rows(), scores.cols(), labels.rows(), labels.cols());
  check_binary(labels, "label");
  const auto n = scores.rows();
  const auto k = scores.cols();
  Eigen::VectorXd thresholds(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const long pos = labels.col(j).sum();
    const long neg = n - pos;
    std::vector<double> candidates(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      candidates[static_cast<std::size_t>(i)] = scores(i, j);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());
    candidates.push_back(candidates.back() + 1.0);  // the all-negative choice

    double best_score = -1.0;
    double best_threshold = candidates.front();
    for (const double t : candidates) {
      long tp = 0, tn = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const bool predicted = scores(i, j) >= t;
        if (labels(i, j) == 1 && predicted) ++tp;
        if (labels(i, j) == 0 && !predicted) ++tn;
      }
      double balanced = 0.0;
      if (pos > 0) balanced += 0.5 * static_cast<double>(tp) / static_cast<double>(pos);
      if (neg > 0) balanced += 0.5 * static_cast<double>(tn) / static_cast<double>(neg);
      if (balanced > best_score + 1e-12) {
        best_score = balanced;
        best_threshold = t;  // ties keep the smallest candidate
      }
    }
    thresholds(j) = best_threshold;
  }
  return thresholds;
}

double mean_accuracy(const Eigen::MatrixXi& preds,
                     const Eigen::MatrixXi& labels) {
  check_pair(preds.rows(), preds.cols(), labels.rows(), labels.cols());
  check_binary(preds, "prediction");
  check_binary(labels, "label");
  const auto k = preds.cols();
  double total = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    long pos = 0, neg = 0, tp = 0, tn = 0;
    for (Eigen::Index i = 0; i < preds.rows(); ++i) {
      if (labels(i, j) == 1) {
        ++pos;
        if (preds(i, j) == 1) ++tp;
      } else {
        ++neg;
        if (preds(i, j) == 0) ++tn;
      }
    }
    // One-class attributes contribute only the defined half.
    double term = 0.0;
    if (pos > 0) term += 0.5 * static_cast<double>(tp) / static_cast<double>(pos);
    if (neg > 0) term += 0.5 * static_cast<double>(tn) / static_cast<double>(neg);
    total += term;
  }
  return total / static_cast<double>(k);
}

ExampleBasedMetrics example_based(const Eigen::MatrixXi& preds,
                                  const Eigen::MatrixXi& labels) {
  check_pair(preds.rows(), preds.cols(), labels.rows(), labels.cols());
  check_binary(preds, "prediction");
  check_binary(labels, "label");
  const auto n = preds.rows();
  double acc = 0.0, prec = 0.0, rec = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    long inter = 0, pred_size = 0, true_size = 0;
    for (Eigen::Index j = 0; j < preds.cols(); ++j) {
      if (preds(i, j) == 1 && labels(i, j) == 1) ++inter;
      if (preds(i, j) == 1) ++pred_size;
      if (labels(i, j) == 1) ++true_size;
    }
    const long uni = pred_size + true_size - inter;
    acc += uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
    // Empty predictions score zero precision (targets are never empty here;
    // degenerate all-empty pairs count as perfect).
    prec += pred_size > 0
                ? static_cast<double>(inter) / static_cast<double>(pred_size)
                : (true_size == 0 ? 1.0 : 0.0);
    rec += true_size > 0
               ? static_cast<double>(inter) / static_cast<double>(true_size)
               : (pred_size == 0 ? 1.0 : 0.0);
  }
  ExampleBasedMetrics out;
  const double dn = static_cast<double>(n);
  out.accuracy = acc / dn;
  out.precision = prec / dn;
  out.recall = rec / dn;
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

std::string MetricsReport::table() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line),
                "mA %.4f | example acc %.4f prec %.4f rec %.4f f1 %.4f\n",
                mean_acc, example.accuracy, example.precision, example.recall,
                example.f1);
  out << line;
  out << "attribute            pos     neg     tpr      tnr      bal_acc\n";
  for (const auto& a : per_attribute) {
    std::snprintf(line, sizeof(line), "%-20s %-7ld %-7ld %-8.4f %-8.4f %-8.4f\n",
                  a.name.c_str(), a.positives, a.negatives, a.tpr, a.tnr,
                  a.balanced_accuracy);
    out << line;
  }
  return out.str();
}

std::string MetricsReport::summary_csv() const {
  std::ostringstream out;
  out << "metric,value\n";
  out << "mA," << format_double(mean_acc) << "\n";
  out << "example_accuracy," << format_double(example.accuracy) << "\n";
  out << "example_precision," << format_double(example.precision) << "\n";
  out << "example_recall," << format_double(example.recall) << "\n";
  out << "example_f1," << format_double(example.f1) << "\n";
  return out.str();
}

std::string MetricsReport::per_attribute_csv() const {
  std::ostringstream out;
  out << "attribute,positives,negatives,tpr,tnr,balanced_accuracy\n";
  for (const auto& a : per_attribute)
    out << a.name << "," << a.positives << "," << a.negatives << ","
        << format_double(a.tpr) << "," << format_double(a.tnr) << ","
        << format_double(a.balanced_accuracy) << "\n";
  return out.str();
}

MetricsReport evaluate(const Eigen::MatrixXd& scores,
                       const Eigen::MatrixXi& labels,
                       const Eigen::VectorXd& thresholds,
                       const std::vector<std::string>& names) {
  if (static_cast<Eigen::Index>(names.size()) != scores.cols())
    throw DimensionError("got " + std::to_string(names.size()) +
                         " attribute names for " + std::to_string(scores.cols()) +
                         " columns");
  const Eigen::MatrixXi preds = binarize(scores, thresholds);
  MetricsReport report;
  report.mean_acc = mean_accuracy(preds, labels);
  report.example = example_based(preds, labels);
  for (Eigen::Index j = 0; j < preds.cols(); ++j) {
    AttributeStat stat;
    stat.name = names[static_cast<std::size_t>(j)];
    long tp = 0, tn = 0;
    for (Eigen::Index i = 0; i < preds.rows(); ++i) {
      if (labels(i, j) == 1) {
        ++stat.positives;
        if (preds(i, j) == 1) ++tp;
      } else {
        ++stat.negatives;
        if (preds(i, j) == 0) ++tn;
      }
    }
    stat.tpr = stat.positives > 0
                   ? static_cast<double>(tp) / static_cast<double>(stat.positives)
                   : std::numeric_limits<double>::quiet_NaN();
    stat.tnr = stat.negatives > 0
                   ? static_cast<double>(tn) / static_cast<double>(stat.negatives)
                   : std::numeric_limits<double>::quiet_NaN();
    double bal = 0.0;
    if (stat.positives > 0) bal += 0.5 * stat.tpr;
    if (stat.negatives > 0) bal += 0.5 * stat.tnr;
    stat.balanced_accuracy = bal;
    report.per_attribute.push_back(std::move(stat));
  }
  return report;
}

}  // namespace aap
