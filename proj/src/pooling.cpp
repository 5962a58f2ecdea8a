#include "aap/pooling.hpp"

#include <cmath>
#include <string>

namespace aap {

void AapConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw DomainError("lambda must be finite and >= 0, got " +
                      format_double(lambda));
  if (!(tau > 0.0 && tau < 1.0))
    throw DomainError("tau must lie in (0,1), got " + format_double(tau));
}

namespace {

void check_branch_matrix(const Eigen::MatrixXd& probs) {
  if (probs.rows() < 2)
    throw DomainError("need at least 2 branches, got " +
                      std::to_string(probs.rows()));
  if (probs.cols() < 1) throw DimensionError("branch matrix has no columns");
  if (!probs.allFinite())
    throw DomainError("branch matrix contains non-finite entries");
}

}  // namespace

LocalMaxPool local_max_pool(const Eigen::MatrixXd& branch_probs) {
  check_branch_matrix(branch_probs);
  const auto m = branch_probs.rows();
  const auto k = branch_probs.cols();
  LocalMaxPool out;
  out.context.resize(m, k);
  out.argmax.resize(m, k);
  for (Eigen::Index l = 0; l < m; ++l)
    for (Eigen::Index j = 0; j < k; ++j) {
      Eigen::Index best = (l == 0) ? 1 : 0;
      for (Eigen::Index i = best + 1; i < m; ++i) {
        if (i == l) continue;
        if (branch_probs(i, j) > branch_probs(best, j)) best = i;
      }
      out.context(l, j) = branch_probs(best, j);
      out.argmax(l, j) = static_cast<int>(best);
    }
  return out;
}

Eigen::MatrixXi hard_indicator(const Eigen::MatrixXd& context, double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw DomainError("tau must lie in (0,1), got " + format_double(tau));
  return (context.array() > tau).cast<int>();
}

Eigen::MatrixXd auxiliary_hard(const Eigen::MatrixXi& indicator,
                               const CoOccurrencePriors& priors) {
  if (indicator.cols() != priors.k())
    throw DimensionError("indicator has " + std::to_string(indicator.cols()) +
                         " columns, priors have k=" + std::to_string(priors.k()));
  const auto m = indicator.rows();
  const auto k = indicator.cols();
  Eigen::MatrixXd aux(m, k);
  for (Eigen::Index l = 0; l < m; ++l) {
    const double active = static_cast<double>(indicator.row(l).sum());
    if (active == 0.0)
      aux.row(l) = priors.p.transpose();
    else
      aux.row(l) = indicator.row(l).cast<double>() * priors.cond / active;
  }
  return aux;
}

Eigen::MatrixXd auxiliary_soft(const Eigen::MatrixXd& context,
                               const CoOccurrencePriors& priors) {
  if (context.cols() != priors.k())
    throw DimensionError("context has " + std::to_string(context.cols()) +
                         " columns, priors have k=" + std::to_string(priors.k()));
  const double k = static_cast<double>(priors.k());
  const Eigen::MatrixXd ones =
      Eigen::MatrixXd::Ones(context.rows(), context.cols());
  return (context * priors.cond + (ones - context) * priors.cond_neg) / k;
}

Eigen::MatrixXd combine(const Eigen::MatrixXd& branch_probs,
                        const Eigen::MatrixXd& aux, double lambda) {
  if (branch_probs.rows() != aux.rows() || branch_probs.cols() != aux.cols())
    throw DimensionError("branch and auxiliary matrices differ in shape");
  if (lambda == 0.0) return branch_probs;  // bitwise identity at lambda = 0
  return branch_probs + lambda * aux;
}

GlobalMaxNormalize global_max_normalize(const Eigen::MatrixXd& combined) {
  if (combined.rows() < 1 || combined.cols() < 1)
    throw DimensionError("cannot pool an empty matrix");
  const auto k = combined.cols();
  GlobalMaxNormalize out;
  out.prediction.resize(k);
  out.col_argmax.resize(k);
  out.col_max.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index best = 0;
    combined.col(j).maxCoeff(&best);  // first maximum: smallest branch index
    const double value = combined(best, j);
    if (value < 0.0)
      throw DomainError("column " + std::to_string(j) +
                        " has a negative maximum; scores must be nonnegative");
    out.col_max(j) = value;
    out.col_argmax(j) = static_cast<int>(best);
  }
  const double total = out.col_max.sum();
  if (total == 0.0)
    throw DomainError("all pooled scores are zero; nothing to normalize");
  out.prediction = out.col_max / total;
  return out;
}

std::pair<Eigen::VectorXd, AapForwardCache> aap_forward(
    const Eigen::MatrixXd& branch_probs, const CoOccurrencePriors& priors,
    const AapConfig& config) {
  config.validate();
  check_branch_matrix(branch_probs);
  if (branch_probs.cols() != priors.k())
    throw DimensionError("branch matrix has " +
                         std::to_string(branch_probs.cols()) +
                         " columns, priors have k=" + std::to_string(priors.k()));
  AapForwardCache cache;
  cache.branch_probs = branch_probs;
  auto pooled = local_max_pool(branch_probs);
  cache.context = std::move(pooled.context);
  cache.context_argmax = std::move(pooled.argmax);
  cache.aux = auxiliary_soft(cache.context, priors);
  cache.combined = combine(branch_probs, cache.aux, config.lambda);
  auto norm = global_max_normalize(cache.combined);
  cache.col_max = std::move(norm.col_max);
  cache.col_argmax = std::move(norm.col_argmax);
  cache.prediction = norm.prediction;
  cache.lambda = config.lambda;
  return {std::move(norm.prediction), std::move(cache)};
}

namespace {

Eigen::VectorXd normalized_target(const Eigen::VectorXi& y) {
  for (Eigen::Index j = 0; j < y.size(); ++j)
    if (y(j) != 0 && y(j) != 1)
      throw DomainError("label entry " + std::to_string(j) + " is " +
                        std::to_string(y(j)) + ", expected 0 or 1");
  const double total = static_cast<double>(y.sum());
  if (total == 0.0)
    throw DomainError("label vector has no positive entry; the normalized "
                      "target is undefined");
  return y.cast<double>() / total;
}

}  // namespace

double aap_loss(const Eigen::VectorXd& prediction, const Eigen::VectorXi& y) {
  if (prediction.size() != y.size())
    throw DimensionError("prediction has length " +
                         std::to_string(prediction.size()) + ", labels " +
                         std::to_string(y.size()));
  const Eigen::VectorXd target = normalized_target(y);
  return 0.5 * (prediction - target).squaredNorm();
}

Eigen::MatrixXd aap_backward(const AapForwardCache& cache,
                             const Eigen::VectorXi& y,
                             const CoOccurrencePriors& priors,
                             const AapConfig& config) {
  config.validate();
  const auto m = cache.branch_probs.rows();
  const auto k = cache.branch_probs.cols();
  if (m < 2 || k != priors.k() || cache.context.rows() != m ||
      cache.context.cols() != k || cache.context_argmax.rows() != m ||
      cache.context_argmax.cols() != k || cache.col_max.size() != k ||
      cache.col_argmax.size() != k || cache.prediction.size() != k)
    throw DimensionError("forward cache is stale: shapes disagree with priors");
  if (y.size() != k)
    throw DimensionError("label vector has length " + std::to_string(y.size()) +
                         ", expected " + std::to_string(k));
  if (cache.lambda != config.lambda)
    throw DimensionError("forward cache is stale: lambda differs from config");

  const Eigen::VectorXd target = normalized_target(y);
  const double total = cache.col_max.sum();
  if (!(total > 0.0))
    throw DomainError("cached column maxima sum to zero");

  // Loss gradient through l1 normalization: with e = col_max, t = sum(e),
  //   d loss / d e_j = (pred_j - target_j)/t - <pred - target, pred>/t.
  const Eigen::VectorXd diff = cache.prediction - target;
  const double mix = diff.dot(cache.prediction) / total;
  const Eigen::VectorXd dcol_max = diff / total - Eigen::VectorXd::Constant(k, mix);

  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(m, k);
  const double scale = config.lambda / static_cast<double>(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index winner = cache.col_argmax(j);
    const double g = dcol_max(j);
    // Direct route: the winning branch's own score.
    grad(winner, j) += g;
    if (config.lambda == 0.0) continue;
    // Context route: the winner's combined score also carries the soft
    // estimate, which reads the leave-one-out maxima of the winner's row.
    // Each of those maxima is a single branch entry (r, t); the prior
    // difference cond - cond_neg is its mixing weight.
    for (Eigen::Index t = 0; t < k; ++t) {
      const Eigen::Index r = cache.context_argmax(winner, t);
      grad(r, t) += scale * g * (priors.cond(t, j) - priors.cond_neg(t, j));
    }
  }
  return grad;
}

Eigen::MatrixXd finite_difference_grad(const Eigen::MatrixXd& branch_probs,
                                       const Eigen::VectorXi& y,
                                       const CoOccurrencePriors& priors,
                                       const AapConfig& config, double h) {
  if (!(h > 0.0)) throw DomainError("step h must be positive");
  Eigen::MatrixXd grad(branch_probs.rows(), branch_probs.cols());
  Eigen::MatrixXd probe = branch_probs;
  for (Eigen::Index r = 0; r < branch_probs.rows(); ++r)
    for (Eigen::Index c = 0; c < branch_probs.cols(); ++c) {
      const double saved = probe(r, c);
      probe(r, c) = saved + h;
      const double up = aap_loss(aap_forward(probe, priors, config).first, y);
      probe(r, c) = saved - h;
      const double down = aap_loss(aap_forward(probe, priors, config).first, y);
      probe(r, c) = saved;
      grad(r, c) = (up - down) / (2.0 * h);
    }
  return grad;
}

}  // namespace aap
