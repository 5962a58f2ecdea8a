#include "aap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "aap/model.hpp"

namespace aap {

double relative_error(double analytic, double numeric, double denom_floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), denom_floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void check_options(const GradCheckOptions& o) {
  if (o.branches < 2) throw DomainError("need at least 2 branches");
  if (o.attributes < 2) throw DomainError("need at least 2 attributes");
  if (o.trials < 1) throw DomainError("need at least 1 trial");
  if (!(o.step > 0.0)) throw DomainError("step must be positive");
  if (!(o.tolerance > 0.0)) throw DomainError("tolerance must be positive");
  if (!(o.margin >= 0.0)) throw DomainError("margin must be nonnegative");
  AapConfig{o.lambda, 0.5}.validate();
}

// Smallest gap between each pooling maximum and its runner-up, over both the
// leave-one-out and the global max. Perturbing any entry by less than half
// this gap cannot reroute the pooling, so central differences see a locally
// linear function.
double tie_margin(const Eigen::MatrixXd& probs, double lambda,
                  const CoOccurrencePriors& priors) {
  const auto m = probs.rows();
  const auto k = probs.cols();
  double margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index l = 0; l < m; ++l)
    for (Eigen::Index j = 0; j < k; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      double second = best;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (i == l) continue;
        const double v = probs(i, j);
        if (v > best) {
          second = best;
          best = v;
        } else if (v > second) {
          second = v;
        }
      }
      if (m > 2) margin = std::min(margin, best - second);
    }
  AapConfig config{lambda, 0.5};
  auto [pred, cache] = aap_forward(probs, priors, config);
  (void)pred;
  for (Eigen::Index j = 0; j < k; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    double second = best;
    for (Eigen::Index l = 0; l < m; ++l) {
      const double v = cache.combined(l, j);
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    margin = std::min(margin, best - second);
  }
  return margin;
}

CoOccurrencePriors random_priors(int k, std::mt19937_64& rng) {
  // Random labels give tables with realistic structure; smoothing keeps
  // every marginal strictly inside (0,1).
  std::uniform_int_distribution<int> rows(8, 40);
  std::bernoulli_distribution bit(0.4);
  LabelMatrix labels;
  labels.schema = AttributeSchema::numbered(k);
  const int n = rows(rng);
  labels.y.resize(n, k);
  for (int r = 0; r < n; ++r) {
    bool any = false;
    for (int c = 0; c < k; ++c) {
      labels.y(r, c) = bit(rng) ? 1 : 0;
      any = any || labels.y(r, c) == 1;
    }
    if (!any) labels.y(r, rng() % static_cast<unsigned>(k)) = 1;
  }
  return build_priors(labels, 0.5);
}

Eigen::VectorXi random_labels(int k, std::mt19937_64& rng) {
  std::bernoulli_distribution bit(0.5);
  Eigen::VectorXi y(k);
  bool any = false;
  for (int j = 0; j < k; ++j) {
    y(j) = bit(rng) ? 1 : 0;
    any = any || y(j) == 1;
  }
  if (!any) y(static_cast<Eigen::Index>(rng() % static_cast<unsigned>(k))) = 1;
  return y;
}

void record(GradCheckReport& report, int trial, int row, int col,
            double analytic, double numeric) {
  GradCheckEntry e;
  e.trial = trial;
  e.row = row;
  e.col = col;
  e.analytic = analytic;
  e.numeric = numeric;
  e.rel_err = relative_error(analytic, numeric, report.options.denom_floor);
  e.pass = e.rel_err <= report.options.tolerance;
  report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
  if (!e.pass) ++report.failures;
  report.entries.push_back(e);
}

}  // namespace

std::string GradCheckReport::table(std::size_t max_rows) const {
  std::ostringstream out;
  out << "trial  position      analytic              numeric               rel_err     status\n";
  std::size_t shown = 0;
  for (const auto& e : entries) {
    if (max_rows > 0 && shown >= max_rows) {
      out << "... (" << entries.size() - shown << " more rows)\n";
      break;
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%-6d (%2d,%2d)       %-21.13e %-21.13e %-11.3e %s\n",
                  e.trial, e.row, e.col, e.analytic, e.numeric, e.rel_err,
                  e.pass ? "pass" : "FAIL");
    out << line;
    ++shown;
  }
  return out.str();
}

std::string GradCheckReport::summary_line() const {
  std::ostringstream out;
  out << "GRADCHECK target=" << target << " pass=" << (pass ? 1 : 0)
      << " trials=" << options.trials << " entries=" << entries.size()
      << " failures=" << failures
      << " max_rel_err=" << format_double(max_rel_err)
      << " tol=" << format_double(options.tolerance)
      << " h=" << format_double(options.step)
      << " lambda=" << format_double(options.lambda)
      << " seed=" << options.seed << " resamples=" << resamples;
  return out.str();
}

GradCheckReport check_layer_gradients(const GradCheckOptions& options) {
  check_options(options);
  GradCheckReport report;
  report.target = "layer";
  report.options = options;

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  const AapConfig config{options.lambda, 0.5};

  for (int trial = 0; trial < options.trials; ++trial) {
    CoOccurrencePriors priors = random_priors(options.attributes, rng);
    Eigen::VectorXi y = random_labels(options.attributes, rng);
    Eigen::MatrixXd probs(options.branches, options.attributes);
    // Resample until every pooling decision has clearance; the analytic
    // gradient is only defined away from ties.
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000)
        throw DomainError("could not sample a tie-free score matrix");
      for (Eigen::Index r = 0; r < probs.rows(); ++r)
        for (Eigen::Index c = 0; c < probs.cols(); ++c) probs(r, c) = unit(rng);
      if (tie_margin(probs, options.lambda, priors) > options.margin) break;
      ++report.resamples;
    }

    const Eigen::MatrixXd analytic =
        aap_backward(aap_forward(probs, priors, config).second, y, priors, config);
    const Eigen::MatrixXd numeric =
        finite_difference_grad(probs, y, priors, config, options.step);
    for (Eigen::Index r = 0; r < probs.rows(); ++r)
      for (Eigen::Index c = 0; c < probs.cols(); ++c)
        record(report, trial, static_cast<int>(r), static_cast<int>(c),
               analytic(r, c), numeric(r, c));
  }
  report.pass = report.failures == 0;
  return report;
}

GradCheckReport check_model_gradients(const GradCheckOptions& options,
                                      int input_dim, int hidden_dim,
                                      int model_branches, int model_attributes) {
  check_options(options);
  GradCheckReport report;
  report.target = "model";
  report.options = options;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const AapConfig config{options.lambda, 0.5};

  for (int trial = 0; trial < options.trials; ++trial) {
    CoOccurrencePriors priors = random_priors(model_attributes, rng);
    Eigen::VectorXi y = random_labels(model_attributes, rng);
    ToyModelParams params = init_params(input_dim, hidden_dim, model_branches,
                                        model_attributes, rng());

    Eigen::VectorXd x(input_dim);
    BranchForwardCache fwd;
    // Resample inputs whose trunk pre-activation sits on the rectifier kink
    // or whose pooling margins are too tight.
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000)
        throw DomainError("could not sample a kink-free model input");
      for (int d = 0; d < input_dim; ++d) x(d) = gauss(rng);
      forward_branches(x, params, &fwd);
      if (fwd.preact.cwiseAbs().minCoeff() <= options.margin * 1e-1) {
        ++report.resamples;
        continue;
      }
      if (tie_margin(fwd.branch_probs, options.lambda, priors) > options.margin)
        break;
      ++report.resamples;
    }

    auto loss_at = [&](const ToyModelParams& q) {
      Eigen::MatrixXd probs = forward_branches(x, q);
      return aap_loss(aap_forward(probs, priors, config).first, y);
    };

    const Eigen::MatrixXd dprobs = aap_backward(
        aap_forward(fwd.branch_probs, priors, config).second, y, priors, config);
    ParamGrads grads = backward_to_params(dprobs, fwd, params);

    ToyModelParams probe = params;
    auto check_block = [&](Eigen::MatrixXd& block, const Eigen::MatrixXd& grad,
                           int tag) {
      for (Eigen::Index r = 0; r < block.rows(); ++r)
        for (Eigen::Index c = 0; c < block.cols(); ++c) {
          const double saved = block(r, c);
          block(r, c) = saved + options.step;
          const double up = loss_at(probe);
          block(r, c) = saved - options.step;
          const double down = loss_at(probe);
          block(r, c) = saved;
          const double numeric = (up - down) / (2.0 * options.step);
          record(report, trial, tag * 1000 + static_cast<int>(r),
                 static_cast<int>(c), grad(r, c), numeric);
        }
    };
    auto check_vec = [&](Eigen::VectorXd& vec, const Eigen::VectorXd& grad,
                         int tag) {
      for (Eigen::Index r = 0; r < vec.size(); ++r) {
        const double saved = vec(r);
        vec(r) = saved + options.step;
        const double up = loss_at(probe);
        vec(r) = saved - options.step;
        const double down = loss_at(probe);
        vec(r) = saved;
        const double numeric = (up - down) / (2.0 * options.step);
        record(report, trial, tag * 1000 + static_cast<int>(r), 0, grad(r),
               numeric);
      }
    };

    check_block(probe.trunk_weight, grads.trunk_weight, 1);
    check_vec(probe.trunk_bias, grads.trunk_bias, 2);
    for (int l = 0; l < model_branches; ++l) {
      check_block(probe.head_weight[static_cast<std::size_t>(l)],
                  grads.head_weight[static_cast<std::size_t>(l)], 3 + 2 * l);
      check_vec(probe.head_bias[static_cast<std::size_t>(l)],
                grads.head_bias[static_cast<std::size_t>(l)], 4 + 2 * l);
    }
  }
  report.pass = report.failures == 0;
  return report;
}

}  // namespace aap
