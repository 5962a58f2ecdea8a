// Test-only scalar reimplementation of the pooling pipeline and the
// co-occurrence counting, written with plain loops and no shared code with
// the library. Used as an independent reference.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

struct Tables {
  std::vector<double> p;
  Mat joint;
  Mat cond;
  Mat cond_neg;
};

// Count-based tables from 0/1 labels, additive smoothing eps.
inline Tables tables_from_labels(const std::vector<std::vector<int>>& rows,
                                 double eps) {
  const std::size_t n = rows.size();
  const std::size_t k = rows.front().size();
  Tables t;
  t.p.assign(k, 0.0);
  t.joint.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    double ni = 0.0;
    for (std::size_t r = 0; r < n; ++r) ni += rows[r][i];
    t.p[i] = (ni + eps) / (static_cast<double>(n) + 2.0 * eps);
    for (std::size_t j = 0; j < k; ++j) {
      double nij = 0.0;
      for (std::size_t r = 0; r < n; ++r) nij += rows[r][i] * rows[r][j];
      if (i == j) nij = ni;
      t.joint[i][j] = (nij + eps) / (static_cast<double>(n) + 2.0 * eps);
    }
  }
  t.cond.assign(k, std::vector<double>(k, 0.0));
  t.cond_neg.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      t.cond[i][j] = t.p[i] == 0.0 ? t.p[j] : t.joint[i][j] / t.p[i];
      t.cond_neg[i][j] =
          t.p[i] == 1.0 ? t.p[j] : (t.p[j] - t.joint[i][j]) / (1.0 - t.p[i]);
    }
  return t;
}

struct ForwardResult {
  Mat context;
  Mat aux;
  Mat combined;
  std::vector<double> col_max;
  std::vector<double> prediction;
};

inline ForwardResult forward(const Mat& probs, const Mat& cond,
                             const Mat& cond_neg, double lambda) {
  const std::size_t m = probs.size();
  const std::size_t k = probs.front().size();
  ForwardResult r;
  r.context.assign(m, std::vector<double>(k, 0.0));
  for (std::size_t l = 0; l < m; ++l)
    for (std::size_t j = 0; j < k; ++j) {
      double best = -1e300;
      for (std::size_t i = 0; i < m; ++i)
        if (i != l && probs[i][j] > best) best = probs[i][j];
      r.context[l][j] = best;
    }
  r.aux.assign(m, std::vector<double>(k, 0.0));
  for (std::size_t l = 0; l < m; ++l)
    for (std::size_t j = 0; j < k; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        sum += r.context[l][i] * cond[i][j] +
               (1.0 - r.context[l][i]) * cond_neg[i][j];
      r.aux[l][j] = sum / static_cast<double>(k);
    }
  r.combined.assign(m, std::vector<double>(k, 0.0));
  for (std::size_t l = 0; l < m; ++l)
    for (std::size_t j = 0; j < k; ++j)
      r.combined[l][j] = probs[l][j] + lambda * r.aux[l][j];
  r.col_max.assign(k, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double best = -1e300;
    for (std::size_t l = 0; l < m; ++l)
      if (r.combined[l][j] > best) best = r.combined[l][j];
    r.col_max[j] = best;
    total += best;
  }
  if (total == 0.0) throw std::runtime_error("oracle: zero normalizer");
  r.prediction.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) r.prediction[j] = r.col_max[j] / total;
  return r;
}

inline double loss(const std::vector<double>& prediction,
                   const std::vector<int>& y) {
  double total = 0.0;
  for (int v : y) total += v;
  double out = 0.0;
  for (std::size_t j = 0; j < prediction.size(); ++j) {
    const double diff = prediction[j] - static_cast<double>(y[j]) / total;
    out += diff * diff;
  }
  return 0.5 * out;
}

}  // namespace oracle
