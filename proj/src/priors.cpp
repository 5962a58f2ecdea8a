#include "aap/priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace aap {

using json = nlohmann::ordered_json;

void AttributeSchema::validate() const {
  if (names.size() < 2)
    throw DomainError("attribute schema needs at least 2 attributes, got " +
                      std::to_string(names.size()));
  std::unordered_set<std::string> seen;
  for (const auto& name : names) {
    if (name.empty()) throw DomainError("attribute schema contains an empty name");
    if (!seen.insert(name).second)
      throw DomainError("duplicate attribute name '" + name + "'");
  }
}

AttributeSchema AttributeSchema::numbered(int k) {
  AttributeSchema schema;
  schema.names.reserve(static_cast<std::size_t>(std::max(k, 0)));
  for (int i = 0; i < k; ++i) schema.names.push_back("attr_" + std::to_string(i));
  return schema;
}

void LabelMatrix::validate() const {
  schema.validate();
  if (y.rows() < 1) throw DomainError("label matrix is empty");
  if (y.cols() != schema.k())
    throw DimensionError("label matrix has " + std::to_string(y.cols()) +
                         " columns but schema has " + std::to_string(schema.k()));
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      if (y(r, c) != 0 && y(r, c) != 1)
        throw DomainError("label entry at (" + std::to_string(r) + "," +
                          std::to_string(c) + ") is " + std::to_string(y(r, c)) +
                          ", expected 0 or 1");
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> count_statistics(
    const LabelMatrix& labels, double epsilon) {
  labels.validate();
  if (!(epsilon >= 0.0))
    throw DomainError("epsilon must be nonnegative, got " + format_double(epsilon));
  const Eigen::MatrixXd yd = labels.y.cast<double>();
  const double denom = static_cast<double>(labels.n()) + 2.0 * epsilon;
  // Pair counts: (y^T y)(i,j) = N_ij; the diagonal equals N_i since entries
  // are 0/1. Counts are exact integers in double, so joint stays symmetric
  // bit for bit.
  Eigen::MatrixXd counts = yd.transpose() * yd;
  Eigen::MatrixXd joint = (counts.array() + epsilon) / denom;
  Eigen::VectorXd p = joint.diagonal();
  return {p, joint};
}

namespace {

void check_p_joint(const Eigen::VectorXd& p, const Eigen::MatrixXd& joint) {
  const auto k = p.size();
  if (k < 2) throw DomainError("need at least 2 attributes");
  if (joint.rows() != k || joint.cols() != k)
    throw DimensionError("joint is " + std::to_string(joint.rows()) + "x" +
                         std::to_string(joint.cols()) + " but p has length " +
                         std::to_string(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(p(i) >= 0.0 && p(i) <= 1.0))
      throw DomainError("marginal p(" + std::to_string(i) + ") = " +
                        format_double(p(i)) + " outside [0,1]");
    if (std::abs(joint(i, i) - p(i)) > 1e-12)
      throw DomainError("joint diagonal disagrees with marginals at " +
                        std::to_string(i));
  }
}

}  // namespace

Eigen::MatrixXd build_conditional(const Eigen::VectorXd& p,
                                  const Eigen::MatrixXd& joint) {
  check_p_joint(p, joint);
  const auto k = p.size();
  Eigen::MatrixXd cond(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (p(i) == 0.0)
      cond.row(i) = p.transpose();
    else
      cond.row(i) = joint.row(i) / p(i);
  }
  return cond.cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::MatrixXd build_negative_conditional(const Eigen::VectorXd& p,
                                           const Eigen::MatrixXd& joint) {
  check_p_joint(p, joint);
  const auto k = p.size();
  Eigen::MatrixXd cond_neg(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (p(i) == 1.0)
      cond_neg.row(i) = p.transpose();
    else
      cond_neg.row(i) = (p.transpose() - joint.row(i)) / (1.0 - p(i));
  }
  return cond_neg.cwiseMax(0.0).cwiseMin(1.0);
}

CoOccurrencePriors build_priors(const LabelMatrix& labels, double epsilon) {
  auto [p, joint] = count_statistics(labels, epsilon);
  CoOccurrencePriors priors;
  priors.schema = labels.schema;
  priors.p = std::move(p);
  priors.joint = std::move(joint);
  priors.cond = build_conditional(priors.p, priors.joint);
  priors.cond_neg = build_negative_conditional(priors.p, priors.joint);
  priors.n = labels.n();
  priors.epsilon = epsilon;
  return priors;
}

bool PriorsValidation::all_pass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const PriorsCheck& c) { return c.pass; });
}

std::string PriorsValidation::to_string() const {
  std::ostringstream out;
  for (const auto& c : checks)
    out << (c.pass ? "[pass] " : "[FAIL] ") << c.name
        << " (worst=" << format_double(c.worst) << ")\n";
  out << (all_pass() ? "priors valid" : "priors INVALID")
      << ", identity residual " << format_double(identity_residual) << "\n";
  return out.str();
}

PriorsValidation validate_priors(const CoOccurrencePriors& priors) {
  constexpr double tol = 1e-12;
  const int k = priors.k();
  priors.schema.validate();
  if (priors.p.size() != k || priors.joint.rows() != k ||
      priors.joint.cols() != k || priors.cond.rows() != k ||
      priors.cond.cols() != k || priors.cond_neg.rows() != k ||
      priors.cond_neg.cols() != k)
    throw DimensionError("priors tables disagree with schema size " +
                         std::to_string(k));

  PriorsValidation v;
  auto add = [&](const std::string& name, double worst) {
    v.checks.push_back({name, worst <= tol, worst});
  };

  auto range_violation = [](const Eigen::MatrixXd& m) {
    return std::max(0.0, std::max((-m).maxCoeff(), (m.array() - 1.0).maxCoeff()));
  };

  add("p_in_unit_interval", range_violation(priors.p));
  add("joint_symmetric",
      (priors.joint - priors.joint.transpose()).cwiseAbs().maxCoeff());
  add("joint_diagonal_matches_p",
      (priors.joint.diagonal() - priors.p).cwiseAbs().maxCoeff());

  double joint_bound = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      joint_bound = std::max(joint_bound, -priors.joint(i, j));
      joint_bound = std::max(
          joint_bound, priors.joint(i, j) - std::min(priors.p(i), priors.p(j)));
    }
  add("joint_bounded_by_marginals", joint_bound);

  add("cond_in_unit_interval", range_violation(priors.cond));
  add("cond_neg_in_unit_interval", range_violation(priors.cond_neg));

  double diag_one = 0.0, diag_zero = 0.0;
  for (int i = 0; i < k; ++i) {
    if (priors.p(i) > 0.0)
      diag_one = std::max(diag_one, std::abs(priors.cond(i, i) - 1.0));
    if (priors.p(i) < 1.0)
      diag_zero = std::max(diag_zero, std::abs(priors.cond_neg(i, i)));
  }
  add("cond_diagonal_one_where_observed", diag_one);
  add("cond_neg_diagonal_zero_where_possible", diag_zero);

  // p_i Pr(a_j|a_i) + (1-p_i) Pr(a_j|not a_i) = p_j: the total-probability
  // identity every downstream mixing step relies on.
  double residual = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      residual = std::max(
          residual, std::abs(priors.p(i) * priors.cond(i, j) +
                             (1.0 - priors.p(i)) * priors.cond_neg(i, j) -
                             priors.p(j)));
  v.identity_residual = residual;
  add("total_probability_identity", residual);
  return v;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index k,
                                 const std::string& field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != k)
    throw ParseError("field '" + field + "' must be a " + std::to_string(k) +
                     "-row array");
  Eigen::MatrixXd m(k, k);
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != k)
      throw ParseError("field '" + field + "' row " + std::to_string(r) +
                       " must have " + std::to_string(k) + " entries");
    for (Eigen::Index c = 0; c < k; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void save_priors(const CoOccurrencePriors& priors,
                 const std::filesystem::path& path) {
  json j;
  j["format"] = "aap-priors";
  j["version"] = 1;
  j["schema"] = {{"names", priors.schema.names}};
  j["n"] = priors.n;
  j["epsilon"] = priors.epsilon;
  json p = json::array();
  for (Eigen::Index i = 0; i < priors.p.size(); ++i) p.push_back(priors.p(i));
  j["p"] = std::move(p);
  j["joint"] = matrix_to_json(priors.joint);
  j["cond"] = matrix_to_json(priors.cond);
  j["cond_neg"] = matrix_to_json(priors.cond_neg);

  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

CoOccurrencePriors load_priors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open priors file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("priors file '" + path.string() + "': " + e.what());
  }
  try {
    if (j.value("format", "") != "aap-priors")
      throw ParseError("not an aap-priors file");
    if (j.value("version", 0) != 1)
      throw ParseError("unsupported priors version");
    CoOccurrencePriors priors;
    priors.schema.names = j.at("schema").at("names").get<std::vector<std::string>>();
    priors.schema.validate();
    const Eigen::Index k = priors.schema.k();
    priors.n = j.at("n").get<long>();
    priors.epsilon = j.at("epsilon").get<double>();
    const auto& jp = j.at("p");
    if (!jp.is_array() || static_cast<Eigen::Index>(jp.size()) != k)
      throw ParseError("field 'p' must have " + std::to_string(k) + " entries");
    priors.p.resize(k);
    for (Eigen::Index i = 0; i < k; ++i)
      priors.p(i) = jp[static_cast<std::size_t>(i)].get<double>();
    priors.joint = matrix_from_json(j.at("joint"), k, "joint");
    priors.cond = matrix_from_json(j.at("cond"), k, "cond");
    priors.cond_neg = matrix_from_json(j.at("cond_neg"), k, "cond_neg");
    return priors;
  } catch (const json::exception& e) {
    throw ParseError("priors file '" + path.string() + "': " + e.what());
  }
}

void write_heatmap_csv(const CoOccurrencePriors& priors,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  for (const auto& name : priors.schema.names) out << "," << name;
  out << "\n";
  for (int i = 0; i < priors.k(); ++i) {
    out << priors.schema.names[static_cast<std::size_t>(i)];
    for (int j = 0; j < priors.k(); ++j)
      out << "," << format_double(priors.cond(i, j));
    out << "\n";
  }
}

}  // namespace aap
