#pragma once

#include <Eigen/Dense>
#include <utility>

#include "aap/priors.hpp"

namespace aap {

// Weights of the pooling layer's context path.
struct AapConfig {
  double lambda = 0.2;  // strength of the co-occurrence correction
  double tau = 0.5;     // activation threshold of the hard indicator variant
  void validate() const;  // lambda >= 0, tau in (0,1)
};

// Leave-one-out column maximum over branches:
//   context(l,j) = max over i != l of probs(i,j)
// argmax(l,j) is the branch realizing it (smallest index on ties).
struct LocalMaxPool {
  Eigen::MatrixXd context;
  Eigen::MatrixXi argmax;
};
LocalMaxPool local_max_pool(const Eigen::MatrixXd& branch_probs);

// indicator(l,j) = 1 iff context(l,j) > tau (strict).
Eigen::MatrixXi hard_indicator(const Eigen::MatrixXd& context, double tau);

// Hard context estimate: row l averages cond over the attributes the
// indicator marks active around branch l. Rows with no active attribute
// fall back to the marginals. Comparison baseline only; training uses the
// soft estimate below.
Eigen::MatrixXd auxiliary_hard(const Eigen::MatrixXi& indicator,
                               const CoOccurrencePriors& priors);

// Soft context estimate, differentiable in the pooled context:
//   aux(l,j) = (1/k) * sum_i [ context(l,i) * cond(i,j)
//                              + (1 - context(l,i)) * cond_neg(i,j) ]
// Each term is a convex mix of the positive and negative conditionals, so
// aux stays in [0,1].
Eigen::MatrixXd auxiliary_soft(const Eigen::MatrixXd& context,
                               const CoOccurrencePriors& priors);

// combined = branch_probs + lambda * aux
Eigen::MatrixXd combine(const Eigen::MatrixXd& branch_probs,
                        const Eigen::MatrixXd& aux, double lambda);

// Column-wise max over branches followed by l1 normalization.
struct GlobalMaxNormalize {
  Eigen::VectorXd prediction;  // normalized column maxima, sums to 1
  Eigen::VectorXi col_argmax;  // branch realizing each maximum
  Eigen::VectorXd col_max;     // raw column maxima
};
GlobalMaxNormalize global_max_normalize(const Eigen::MatrixXd& combined);

// Everything the backward pass reads from one forward evaluation. The
// argmax fields freeze the pooling routing; backward treats them as
// constants, which is exact away from ties.
struct AapForwardCache {
  Eigen::MatrixXd branch_probs;
  Eigen::MatrixXd context;
  Eigen::MatrixXi context_argmax;
  Eigen::MatrixXd aux;
  Eigen::MatrixXd combined;
  Eigen::VectorXd col_max;
  Eigen::VectorXi col_argmax;
  Eigen::VectorXd prediction;
  double lambda = 0.0;
};

// Full layer: local max pool -> soft context estimate -> combine ->
// global max pool -> l1 normalize.
std::pair<Eigen::VectorXd, AapForwardCache> aap_forward(
    const Eigen::MatrixXd& branch_probs, const CoOccurrencePriors& priors,
    const AapConfig& config);

// Half squared distance between the prediction and the l1-normalized
// label vector. y must have at least one positive entry.
double aap_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXi& y);

// d loss / d branch_probs with the cached pooling routes held fixed.
// Exact wherever no max is tied.
Eigen::MatrixXd aap_backward(const AapForwardCache& cache,
                             const Eigen::VectorXi& y,
                             const CoOccurrencePriors& priors,
                             const AapConfig& config);

// Central-difference gradient of the composed loss, entry by entry.
Eigen::MatrixXd finite_difference_grad(const Eigen::MatrixXd& branch_probs,
                                       const Eigen::VectorXi& y,
                                       const CoOccurrencePriors& priors,
                                       const AapConfig& config, double h);

}  // namespace aap
