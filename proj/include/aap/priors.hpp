#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "aap/common.hpp"

namespace aap {

// Ordered list of attribute names; its length fixes the label dimension k.
struct AttributeSchema {
  std::vector<std::string> names;

  int k() const { return static_cast<int>(names.size()); }
  void validate() const;  // k >= 2, names nonempty and unique
  static AttributeSchema numbered(int k);

  bool operator==(const AttributeSchema&) const = default;
};

// n x k binary annotation matrix, one row per instance.
struct LabelMatrix {
  AttributeSchema schema;
  Eigen::MatrixXi y;

  long n() const { return static_cast<long>(y.rows()); }
  int k() const { return schema.k(); }
  void validate() const;  // entries in {0,1}, shapes consistent, n >= 1
};

// Empirical co-occurrence statistics of a label matrix.
//
// p(i)        marginal Pr(a_i)
// joint(i,j)  Pr(a_i and a_j), symmetric, joint(i,i) = p(i)
// cond(i,j)   Pr(a_j | a_i): the row picks the conditioning attribute
// cond_neg(i,j) Pr(a_j | not a_i)
//
// The tables satisfy p(i)*cond(i,j) + (1-p(i))*cond_neg(i,j) = p(j) for all
// i, j, including the fallback rows used when p(i) is exactly 0 or 1.
struct CoOccurrencePriors {
  AttributeSchema schema;
  Eigen::VectorXd p;
  Eigen::MatrixXd joint;
  Eigen::MatrixXd cond;
  Eigen::MatrixXd cond_neg;
  long n = 0;
  double epsilon = 0.0;

  int k() const { return schema.k(); }
};

// Smoothed marginals and joint from raw labels:
//   p(i) = (N_i + eps) / (n + 2 eps),  joint(i,j) = (N_ij + eps) / (n + 2 eps)
// with N_ii = N_i so the diagonal stays consistent.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> count_statistics(
    const LabelMatrix& labels, double epsilon = 0.0);

// cond(i,j) = joint(i,j) / p(i); rows with p(i) = 0 fall back to the
// marginals (an unobserved condition carries no information).
Eigen::MatrixXd build_conditional(const Eigen::VectorXd& p,
                                  const Eigen::MatrixXd& joint);

// cond_neg(i,j) = (p(j) - joint(i,j)) / (1 - p(i)); rows with p(i) = 1 fall
// back to the marginals.
Eigen::MatrixXd build_negative_conditional(const Eigen::VectorXd& p,
                                           const Eigen::MatrixXd& joint);

CoOccurrencePriors build_priors(const LabelMatrix& labels,
                                double epsilon = 0.0);

struct PriorsCheck {
  std::string name;
  bool pass = false;
  double worst = 0.0;  // largest violation seen (0 when clean)
};

struct PriorsValidation {
  std::vector<PriorsCheck> checks;
  double identity_residual = 0.0;
  bool all_pass() const;
  std::string to_string() const;
};

// Re-derives every structural invariant of the tables at 1e-12.
PriorsValidation validate_priors(const CoOccurrencePriors& priors);

void save_priors(const CoOccurrencePriors& priors,
                 const std::filesystem::path& path);
CoOccurrencePriors load_priors(const std::filesystem::path& path);

// (k+1) x (k+1) CSV of cond with attribute names on both margins.
void write_heatmap_csv(const CoOccurrencePriors& priors,
                       const std::filesystem::path& path);

}  // namespace aap
