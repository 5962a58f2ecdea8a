#include "aap/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aap/metrics.hpp"

namespace aap {

using json = nlohmann::ordered_json;

void ToyModelParams::validate() const {
  if (input_dim < 1 || hidden_dim < 1)
    throw DimensionError("model dims must be positive");
  if (branches < 2) throw DomainError("need at least 2 branches");
  if (attributes < 2) throw DomainError("need at least 2 attributes");
  if (static_cast<int>(slices.size()) != branches)
    throw DimensionError("have " + std::to_string(slices.size()) +
                         " slices for " + std::to_string(branches) + " branches");
  for (const auto& s : slices)
    if (s.begin < 0 || s.length < 1 || s.begin + s.length > hidden_dim)
      throw DimensionError("branch slice [" + std::to_string(s.begin) + "," +
                           std::to_string(s.begin + s.length) +
                           ") escapes the hidden vector");
  if (trunk_weight.rows() != hidden_dim || trunk_weight.cols() != input_dim ||
      trunk_bias.size() != hidden_dim || trunk_mask.rows() != hidden_dim ||
      trunk_mask.cols() != input_dim)
    throw DimensionError("trunk parameter shapes disagree with dims");
  if (static_cast<int>(head_weight.size()) != branches ||
      static_cast<int>(head_bias.size()) != branches)
    throw DimensionError("head parameter count disagrees with branches");
  for (int l = 0; l < branches; ++l) {
    const auto& s = slices[static_cast<std::size_t>(l)];
    if (head_weight[static_cast<std::size_t>(l)].rows() != attributes ||
        head_weight[static_cast<std::size_t>(l)].cols() != s.length ||
        head_bias[static_cast<std::size_t>(l)].size() != attributes)
      throw DimensionError("head " + std::to_string(l) + " shapes disagree");
  }
  if (sigmoid_weight.rows() != attributes ||
      sigmoid_weight.cols() != hidden_dim || sigmoid_bias.size() != attributes)
    throw DimensionError("sigmoid head shapes disagree with dims");
  for (Eigen::Index r = 0; r < trunk_mask.rows(); ++r)
    for (Eigen::Index c = 0; c < trunk_mask.cols(); ++c)
      if (trunk_mask(r, c) != 0.0 && trunk_mask(r, c) != 1.0)
        throw DomainError("trunk mask must be binary");
}

std::vector<BranchSlice> make_branch_slices(int hidden_dim, int branches,
                                            bool global_first) {
  if (branches < 2) throw DomainError("need at least 2 branches");
  const int local = global_first ? branches - 1 : branches;
  if (local < 1) throw DomainError("need at least one local branch");
  if (hidden_dim < local)
    throw DimensionError("hidden_dim " + std::to_string(hidden_dim) +
                         " cannot feed " + std::to_string(local) +
                         " local branches");
  std::vector<BranchSlice> slices;
  if (global_first) slices.push_back({0, hidden_dim});
  const int base = hidden_dim / local;
  const int extra = hidden_dim % local;
  int begin = 0;
  for (int g = 0; g < local; ++g) {
    const int len = base + (g < extra ? 1 : 0);
    slices.push_back({begin, len});
    begin += len;
  }
  return slices;
}

Eigen::MatrixXd make_trunk_mask(int hidden_dim, int input_dim,
                                const std::vector<BranchSlice>& slices,
                                bool global_first) {
  const std::size_t first = global_first ? 1 : 0;
  const int groups = static_cast<int>(slices.size() - first);
  if (groups < 1) throw DomainError("mask needs at least one local slice");
  if (input_dim < groups)
    throw DimensionError("input_dim " + std::to_string(input_dim) +
                         " cannot split into " + std::to_string(groups) +
                         " groups");
  Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(hidden_dim, input_dim);
  const int base = input_dim / groups;
  const int extra = input_dim % groups;
  int col = 0;
  for (int g = 0; g < groups; ++g) {
    const int width = base + (g < extra ? 1 : 0);
    const auto& s = slices[first + static_cast<std::size_t>(g)];
    mask.block(s.begin, col, s.length, width).setOnes();
    col += width;
  }
  return mask;
}

ToyModelParams init_params(int input_dim, int hidden_dim, int branches,
                           int attributes, std::uint64_t seed,
                           bool global_first, bool group_local_trunk) {
  ToyModelParams params;
  params.input_dim = input_dim;
  params.hidden_dim = hidden_dim;
  params.branches = branches;
  params.attributes = attributes;
  params.slices = make_branch_slices(hidden_dim, branches, global_first);
  params.trunk_mask =
      group_local_trunk
          ? make_trunk_mask(hidden_dim, input_dim, params.slices, global_first)
          : Eigen::MatrixXd::Ones(hidden_dim, input_dim);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  // Fixed draw order (trunk row-major, trunk bias, heads in branch order,
  // sigmoid head last) keeps the same seed giving the same weights. Masked
  // rows scale by their masked fan-in.
  params.trunk_weight.resize(hidden_dim, input_dim);
  params.trunk_bias.resize(hidden_dim);
  Eigen::VectorXd row_scale(hidden_dim);
  for (int r = 0; r < hidden_dim; ++r) {
    const double fan = params.trunk_mask.row(r).sum();
    row_scale(r) = fan > 0.0 ? 1.0 / std::sqrt(fan) : 0.0;
  }
  for (int r = 0; r < hidden_dim; ++r)
    for (int c = 0; c < input_dim; ++c)
      params.trunk_weight(r, c) =
          params.trunk_mask(r, c) * unit(rng) * row_scale(r);
  for (int r = 0; r < hidden_dim; ++r)
    params.trunk_bias(r) = unit(rng) * row_scale(r);

  for (const auto& s : params.slices) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(s.length));
    Eigen::MatrixXd w(attributes, s.length);
    for (int r = 0; r < attributes; ++r)
      for (int c = 0; c < s.length; ++c) w(r, c) = unit(rng) * scale;
    Eigen::VectorXd b(attributes);
    for (int r = 0; r < attributes; ++r) b(r) = unit(rng) * scale;
    params.head_weight.push_back(std::move(w));
    params.head_bias.push_back(std::move(b));
  }

  const double sig_scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  params.sigmoid_weight.resize(attributes, hidden_dim);
  for (int r = 0; r < attributes; ++r)
    for (int c = 0; c < hidden_dim; ++c)
      params.sigmoid_weight(r, c) = unit(rng) * sig_scale;
  params.sigmoid_bias.resize(attributes);
  for (int r = 0; r < attributes; ++r) params.sigmoid_bias(r) = unit(rng) * sig_scale;

  params.validate();
  return params;
}

namespace {

void trunk_forward(const Eigen::VectorXd& x, const ToyModelParams& params,
                   Eigen::VectorXd& preact, Eigen::VectorXd& hidden) {
  if (x.size() != params.input_dim)
    throw DimensionError("input has length " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(params.input_dim));
  // The mask is applied at use, not only at init, so masked connections
  // stay dead no matter what the optimizer writes into the weight matrix.
  preact = params.trunk_weight.cwiseProduct(params.trunk_mask) * x +
           params.trunk_bias;
  hidden = preact.cwiseMax(0.0);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& z) {
  const Eigen::ArrayXd shifted = (z.array() - z.maxCoeff()).exp();
  return (shifted / shifted.sum()).matrix();
}

}  // namespace

Eigen::MatrixXd forward_branches(const Eigen::VectorXd& x,
                                 const ToyModelParams& params,
                                 BranchForwardCache* cache) {
  Eigen::VectorXd preact, hidden;
  trunk_forward(x, params, preact, hidden);
  Eigen::MatrixXd probs(params.branches, params.attributes);
  for (int l = 0; l < params.branches; ++l) {
    const auto& s = params.slices[static_cast<std::size_t>(l)];
    const Eigen::VectorXd z =
        params.head_weight[static_cast<std::size_t>(l)] *
            hidden.segment(s.begin, s.length) +
        params.head_bias[static_cast<std::size_t>(l)];
    probs.row(l) = softmax(z).transpose();
  }
  if (cache) {
    cache->input = x;
    cache->preact = std::move(preact);
    cache->hidden = std::move(hidden);
    cache->branch_probs = probs;
  }
  return probs;
}

Eigen::VectorXd baseline_forward(const Eigen::VectorXd& x,
                                 const ToyModelParams& params,
                                 BranchForwardCache* cache) {
  Eigen::VectorXd preact, hidden;
  trunk_forward(x, params, preact, hidden);
  const Eigen::VectorXd z = params.sigmoid_weight * hidden + params.sigmoid_bias;
  Eigen::VectorXd probs =
      (1.0 / (1.0 + (-z.array()).exp())).matrix();
  if (cache) {
    cache->input = x;
    cache->preact = std::move(preact);
    cache->hidden = std::move(hidden);
    cache->branch_probs.resize(0, 0);
  }
  return probs;
}

ParamGrads ParamGrads::zeros_like(const ToyModelParams& params) {
  ParamGrads g;
  g.trunk_weight = Eigen::MatrixXd::Zero(params.hidden_dim, params.input_dim);
  g.trunk_bias = Eigen::VectorXd::Zero(params.hidden_dim);
  for (const auto& s : params.slices) {
    g.head_weight.push_back(Eigen::MatrixXd::Zero(params.attributes, s.length));
    g.head_bias.push_back(Eigen::VectorXd::Zero(params.attributes));
  }
  g.sigmoid_weight = Eigen::MatrixXd::Zero(params.attributes, params.hidden_dim);
  g.sigmoid_bias = Eigen::VectorXd::Zero(params.attributes);
  return g;
}

void ParamGrads::accumulate(const ParamGrads& other) {
  trunk_weight += other.trunk_weight;
  trunk_bias += other.trunk_bias;
  for (std::size_t l = 0; l < head_weight.size(); ++l) {
    head_weight[l] += other.head_weight[l];
    head_bias[l] += other.head_bias[l];
  }
  sigmoid_weight += other.sigmoid_weight;
  sigmoid_bias += other.sigmoid_bias;
}

void ParamGrads::scale(double s) {
  trunk_weight *= s;
  trunk_bias *= s;
  for (std::size_t l = 0; l < head_weight.size(); ++l) {
    head_weight[l] *= s;
    head_bias[l] *= s;
  }
  sigmoid_weight *= s;
  sigmoid_bias *= s;
}

namespace {

// Shared tail of both backward passes: hidden gradient -> trunk gradients,
// mask gating included.
void trunk_backward(const Eigen::VectorXd& dhidden,
                    const BranchForwardCache& cache,
                    const ToyModelParams& params, ParamGrads& grads) {
  const Eigen::VectorXd dpre =
      (cache.preact.array() > 0.0).select(dhidden, 0.0);
  grads.trunk_bias = dpre;
  grads.trunk_weight =
      (dpre * cache.input.transpose()).cwiseProduct(params.trunk_mask);
}

}  // namespace

ParamGrads backward_to_params(const Eigen::MatrixXd& dloss_dprobs,
                              const BranchForwardCache& cache,
                              const ToyModelParams& params) {
  if (dloss_dprobs.rows() != params.branches ||
      dloss_dprobs.cols() != params.attributes ||
      cache.hidden.size() != params.hidden_dim ||
      cache.input.size() != params.input_dim ||
      cache.branch_probs.rows() != params.branches)
    throw DimensionError("forward cache is stale: shapes disagree with model");
  ParamGrads grads = ParamGrads::zeros_like(params);
  Eigen::VectorXd dhidden = Eigen::VectorXd::Zero(params.hidden_dim);
  for (int l = 0; l < params.branches; ++l) {
    const auto& s = params.slices[static_cast<std::size_t>(l)];
    const Eigen::VectorXd probs = cache.branch_probs.row(l).transpose();
    const Eigen::VectorXd g = dloss_dprobs.row(l).transpose();
    // Softmax Jacobian applied to the incoming gradient.
    const double mix = g.dot(probs);
    const Eigen::VectorXd dz = probs.array() * (g.array() - mix);
    grads.head_weight[static_cast<std::size_t>(l)] =
        dz * cache.hidden.segment(s.begin, s.length).transpose();
    grads.head_bias[static_cast<std::size_t>(l)] = dz;
    dhidden.segment(s.begin, s.length) +=
        params.head_weight[static_cast<std::size_t>(l)].transpose() * dz;
  }
  trunk_backward(dhidden, cache, params, grads);
  return grads;
}

double baseline_bce_loss(const Eigen::VectorXd& probs, const Eigen::VectorXi& y) {
  if (probs.size() != y.size())
    throw DimensionError("probability and label lengths disagree");
  double loss = 0.0;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    const double s = std::clamp(probs(j), 1e-12, 1.0 - 1e-12);
    loss += y(j) == 1 ? -std::log(s) : -std::log1p(-s);
  }
  return loss / static_cast<double>(probs.size());
}

ParamGrads baseline_backward(const Eigen::VectorXd& probs,
                             const Eigen::VectorXi& y,
                             const BranchForwardCache& cache,
                             const ToyModelParams& params) {
  if (probs.size() != params.attributes || y.size() != params.attributes ||
      cache.hidden.size() != params.hidden_dim)
    throw DimensionError("forward cache is stale: shapes disagree with model");
  ParamGrads grads = ParamGrads::zeros_like(params);
  const Eigen::VectorXd dz =
      (probs - y.cast<double>()) / static_cast<double>(params.attributes);
  grads.sigmoid_weight = dz * cache.hidden.transpose();
  grads.sigmoid_bias = dz;
  trunk_backward(params.sigmoid_weight.transpose() * dz, cache, params, grads);
  return grads;
}

const char* arm_name(ModelArm arm) {
  switch (arm) {
    case ModelArm::Baseline: return "baseline";
    case ModelArm::MultiBranch: return "multibranch";
    case ModelArm::CoCnn: return "cocnn";
  }
  throw DomainError("unknown arm");
}

ModelArm parse_arm(const std::string& name) {
  if (name == "baseline") return ModelArm::Baseline;
  if (name == "multibranch") return ModelArm::MultiBranch;
  if (name == "cocnn") return ModelArm::CoCnn;
  throw DomainError("unknown arm '" + name +
                    "', expected baseline, multibranch or cocnn");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0))
    throw DomainError("learning rate must be positive, got " +
                      format_double(learning_rate));
  if (batch_size < 1) throw DomainError("batch size must be at least 1");
  if (epochs < 0) throw DomainError("epochs must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw DomainError("momentum must lie in [0,1)");
  if (branches < 2) throw DomainError("need at least 2 branches");
  if (hidden_dim < 1) throw DomainError("hidden_dim must be positive");
  AapConfig{lambda, 0.5}.validate();
}

namespace {

struct Velocity {
  ParamGrads v;
  bool live = false;
};

void apply_update(ToyModelParams& params, const ParamGrads& grads,
                  double learning_rate, double momentum, Velocity& vel) {
  const ParamGrads* step = &grads;
  if (momentum > 0.0) {
    if (!vel.live) {
      vel.v = grads;
      vel.live = true;
    } else {
      vel.v.scale(momentum);
      vel.v.accumulate(grads);
    }
    step = &vel.v;
  }
  params.trunk_weight -= learning_rate * step->trunk_weight;
  params.trunk_bias -= learning_rate * step->trunk_bias;
  for (std::size_t l = 0; l < params.head_weight.size(); ++l) {
    params.head_weight[l] -= learning_rate * step->head_weight[l];
    params.head_bias[l] -= learning_rate * step->head_bias[l];
  }
  params.sigmoid_weight -= learning_rate * step->sigmoid_weight;
  params.sigmoid_bias -= learning_rate * step->sigmoid_bias;
}

}  // namespace

TrainResult train(const Dataset& train_set,
                  const std::optional<Dataset>& val_set,
                  const CoOccurrencePriors& priors, const TrainConfig& config) {
  config.validate();
  train_set.validate();
  if (val_set) val_set->validate();
  const int k = train_set.labels.k();
  const bool pooled = config.arm != ModelArm::Baseline;
  if (pooled && priors.k() != k)
    throw DimensionError("priors have k=" + std::to_string(priors.k()) +
                         " but labels have k=" + std::to_string(k));
  const double lambda = config.effective_lambda();
  const AapConfig layer_config{lambda, 0.5};

  TrainResult result;
  result.arm = config.arm;
  result.lambda = lambda;
  result.params =
      init_params(train_set.input_dim(), config.hidden_dim, config.branches, k,
                  config.seed, config.global_first, config.group_local_trunk);

  const long n = train_set.n();
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  // Separate stream from init so reordering draws in one never shifts the other.
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  Velocity vel;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (long start = 0; start < n; start += config.batch_size) {
      const long stop = std::min(n, start + static_cast<long>(config.batch_size));
      ParamGrads batch = ParamGrads::zeros_like(result.params);
      for (long b = start; b < stop; ++b) {
        const long row = order[static_cast<std::size_t>(b)];
        const Eigen::VectorXd x = train_set.features.row(row).transpose();
        const Eigen::VectorXi y = train_set.labels.y.row(row).transpose();
        BranchForwardCache fwd;
        if (pooled) {
          forward_branches(x, result.params, &fwd);
          if (!fwd.branch_probs.allFinite())
            throw DivergenceError("branch scores became non-finite in epoch " +
                                  std::to_string(epoch) + " near instance " +
                                  std::to_string(b));
          auto [pred, cache] = aap_forward(fwd.branch_probs, priors, layer_config);
          epoch_loss += aap_loss(pred, y);
          const Eigen::MatrixXd dprobs =
              aap_backward(cache, y, priors, layer_config);
          batch.accumulate(backward_to_params(dprobs, fwd, result.params));
        } else {
          const Eigen::VectorXd probs = baseline_forward(x, result.params, &fwd);
          if (!probs.allFinite())
            throw DivergenceError("scores became non-finite in epoch " +
                                  std::to_string(epoch) + " near instance " +
                                  std::to_string(b));
          epoch_loss += baseline_bce_loss(probs, y);
          batch.accumulate(baseline_backward(probs, y, fwd, result.params));
        }
      }
      batch.scale(1.0 / static_cast<double>(stop - start));
      apply_update(result.params, batch, config.learning_rate, config.momentum,
                   vel);
      if (!std::isfinite(epoch_loss))
        throw DivergenceError("loss became non-finite in epoch " +
                              std::to_string(epoch) + " near instance " +
                              std::to_string(stop));
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = epoch_loss / static_cast<double>(n);
    stats.mean_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (val_set && val_set->n() > 0) {
      const Eigen::MatrixXd scores =
          score_dataset(*val_set, result.params, priors, lambda, config.arm);
      const double threshold =
          config.arm == ModelArm::Baseline ? 0.5 : 1.0 / static_cast<double>(k);
      stats.mean_accuracy =
          mean_accuracy(binarize(scores, threshold), val_set->labels.y);
    }
    result.log.push_back(stats);
  }
  return result;
}

Eigen::VectorXd predict(const Eigen::VectorXd& x, const ToyModelParams& params,
                        const CoOccurrencePriors& priors, double lambda) {
  const Eigen::MatrixXd probs = forward_branches(x, params);
  return aap_forward(probs, priors, AapConfig{lambda, 0.5}).first;
}

Eigen::MatrixXd score_dataset(const Dataset& dataset,
                              const ToyModelParams& params,
                              const CoOccurrencePriors& priors, double lambda,
                              ModelArm arm) {
  Eigen::MatrixXd scores(dataset.n(), params.attributes);
  for (long i = 0; i < dataset.n(); ++i) {
    const Eigen::VectorXd x = dataset.features.row(i).transpose();
    scores.row(i) = (arm == ModelArm::Baseline
                         ? baseline_forward(x, params)
                         : predict(x, params, priors, lambda))
                        .transpose();
  }
  return scores;
}

namespace {

json flat(const Eigen::MatrixXd& m) {
  json arr = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  return arr;
}

json flat(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::MatrixXd unflat(const json& arr, Eigen::Index rows, Eigen::Index cols,
                       const std::string& field) {
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != rows * cols)
    throw ParseError("field '" + field + "' must hold " +
                     std::to_string(rows * cols) + " values");
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = arr[i++].get<double>();
  return m;
}

Eigen::VectorXd unflat_vec(const json& arr, Eigen::Index size,
                           const std::string& field) {
  if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != size)
    throw ParseError("field '" + field + "' must hold " + std::to_string(size) +
                     " values");
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i)
    v(i) = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

void save_checkpoint(const TrainResult& result,
                     const std::filesystem::path& path) {
  result.params.validate();
  const auto& p = result.params;
  json j;
  j["format"] = "aap-checkpoint";
  j["version"] = 1;
  j["arm"] = arm_name(result.arm);
  j["lambda"] = result.lambda;
  j["input_dim"] = p.input_dim;
  j["hidden_dim"] = p.hidden_dim;
  j["branches"] = p.branches;
  j["attributes"] = p.attributes;
  json slices = json::array();
  for (const auto& s : p.slices)
    slices.push_back({{"begin", s.begin}, {"length", s.length}});
  j["branch_slices"] = std::move(slices);
  j["trunk_weight"] = flat(p.trunk_weight);
  j["trunk_bias"] = flat(p.trunk_bias);
  j["trunk_mask"] = flat(p.trunk_mask);
  json hw = json::array(), hb = json::array();
  for (int l = 0; l < p.branches; ++l) {
    hw.push_back(flat(p.head_weight[static_cast<std::size_t>(l)]));
    hb.push_back(flat(p.head_bias[static_cast<std::size_t>(l)]));
  }
  j["head_weight"] = std::move(hw);
  j["head_bias"] = std::move(hb);
  j["sigmoid_weight"] = flat(p.sigmoid_weight);
  j["sigmoid_bias"] = flat(p.sigmoid_bias);

  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

TrainResult load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open checkpoint file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("checkpoint file '" + path.string() + "': " + e.what());
  }
  try {
    if (j.value("format", "") != "aap-checkpoint")
      throw ParseError("not an aap-checkpoint file");
    if (j.value("version", 0) != 1)
      throw ParseError("unsupported checkpoint version");
    TrainResult result;
    result.arm = parse_arm(j.at("arm").get<std::string>());
    result.lambda = j.at("lambda").get<double>();
    ToyModelParams p;
    p.input_dim = j.at("input_dim").get<int>();
    p.hidden_dim = j.at("hidden_dim").get<int>();
    p.branches = j.at("branches").get<int>();
    p.attributes = j.at("attributes").get<int>();
    for (const auto& js : j.at("branch_slices"))
      p.slices.push_back({js.at("begin").get<int>(), js.at("length").get<int>()});
    p.trunk_weight =
        unflat(j.at("trunk_weight"), p.hidden_dim, p.input_dim, "trunk_weight");
    p.trunk_bias = unflat_vec(j.at("trunk_bias"), p.hidden_dim, "trunk_bias");
    p.trunk_mask =
        unflat(j.at("trunk_mask"), p.hidden_dim, p.input_dim, "trunk_mask");
    const auto& hw = j.at("head_weight");
    const auto& hb = j.at("head_bias");
    if (static_cast<int>(hw.size()) != p.branches ||
        static_cast<int>(hb.size()) != p.branches)
      throw ParseError("head arrays disagree with branch count");
    for (int l = 0; l < p.branches; ++l) {
      const auto& s = p.slices[static_cast<std::size_t>(l)];
      p.head_weight.push_back(unflat(hw[static_cast<std::size_t>(l)],
                                     p.attributes, s.length, "head_weight"));
      p.head_bias.push_back(unflat_vec(hb[static_cast<std::size_t>(l)],
                                       p.attributes, "head_bias"));
    }
    p.sigmoid_weight = unflat(j.at("sigmoid_weight"), p.attributes,
                              p.hidden_dim, "sigmoid_weight");
    p.sigmoid_bias =
        unflat_vec(j.at("sigmoid_bias"), p.attributes, "sigmoid_bias");
    p.validate();
    result.params = std::move(p);
    return result;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint file '" + path.string() + "': " + e.what());
  }
}

void save_train_log_csv(const std::vector<EpochStats>& log,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  out << "epoch,loss,mA\n";
  for (const auto& e : log) {
    out << e.epoch << "," << format_double(e.loss) << ",";
    if (std::isfinite(e.mean_accuracy)) out << format_double(e.mean_accuracy);
    out << "\n";
  }
}

}  // namespace aap
