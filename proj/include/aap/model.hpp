#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aap/data.hpp"
#include "aap/pooling.hpp"

namespace aap {

struct BranchSlice {
  int begin = 0;
  int length = 0;
};

// Desk-scale network feeding the pooling layer: a shared affine trunk with a
// fixed binary connectivity mask and a rectifier, then one affine+softmax
// head per branch over that branch's hidden slice. A sigmoid head over the
// whole hidden vector serves the baseline arm. All heads share the trunk.
struct ToyModelParams {
  int input_dim = 0;
  int hidden_dim = 0;
  int branches = 0;    // m
  int attributes = 0;  // k
  std::vector<BranchSlice> slices;
  Eigen::MatrixXd trunk_weight;  // hidden_dim x input_dim
  Eigen::VectorXd trunk_bias;
  Eigen::MatrixXd trunk_mask;    // binary, same shape as trunk_weight
  std::vector<Eigen::MatrixXd> head_weight;  // per branch: k x slice length
  std::vector<Eigen::VectorXd> head_bias;    // per branch: k
  Eigen::MatrixXd sigmoid_weight;  // k x hidden_dim
  Eigen::VectorXd sigmoid_bias;

  void validate() const;
};

// First slice covers the whole hidden vector when global_first; the
// remaining branches partition it contiguously and near-evenly.
std::vector<BranchSlice> make_branch_slices(int hidden_dim, int branches,
                                            bool global_first);

// Wires hidden block g to input block g, one block per local branch slice,
// so different branches read different input groups.
Eigen::MatrixXd make_trunk_mask(int hidden_dim, int input_dim,
                                const std::vector<BranchSlice>& slices,
                                bool global_first);

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] with a fixed draw
// order; masked trunk rows use the masked fan-in. Deterministic in seed.
ToyModelParams init_params(int input_dim, int hidden_dim, int branches,
                           int attributes, std::uint64_t seed,
                           bool global_first = true,
                           bool group_local_trunk = true);

struct BranchForwardCache {
  Eigen::VectorXd input;
  Eigen::VectorXd preact;  // trunk pre-activation
  Eigen::VectorXd hidden;
  Eigen::MatrixXd branch_probs;  // m x k, rows sum to 1
};

// Per-branch softmax scores; rows of the result sum to 1.
Eigen::MatrixXd forward_branches(const Eigen::VectorXd& x,
                                 const ToyModelParams& params,
                                 BranchForwardCache* cache = nullptr);

// Baseline head: per-attribute sigmoid over the full hidden vector.
Eigen::VectorXd baseline_forward(const Eigen::VectorXd& x,
                                 const ToyModelParams& params,
                                 BranchForwardCache* cache = nullptr);

struct ParamGrads {
  Eigen::MatrixXd trunk_weight;
  Eigen::VectorXd trunk_bias;
  std::vector<Eigen::MatrixXd> head_weight;
  std::vector<Eigen::VectorXd> head_bias;
  Eigen::MatrixXd sigmoid_weight;
  Eigen::VectorXd sigmoid_bias;

  static ParamGrads zeros_like(const ToyModelParams& params);
  void accumulate(const ParamGrads& other);
  void scale(double s);
};

// Pushes d loss / d branch_probs through softmax heads, trunk rectifier and
// masked trunk weights. The mask also gates the weight gradient, so masked
// connections never move.
ParamGrads backward_to_params(const Eigen::MatrixXd& dloss_dprobs,
                              const BranchForwardCache& cache,
                              const ToyModelParams& params);

// Mean binary cross-entropy over attributes.
double baseline_bce_loss(const Eigen::VectorXd& probs, const Eigen::VectorXi& y);
ParamGrads baseline_backward(const Eigen::VectorXd& probs,
                             const Eigen::VectorXi& y,
                             const BranchForwardCache& cache,
                             const ToyModelParams& params);

enum class ModelArm { Baseline, MultiBranch, CoCnn };
const char* arm_name(ModelArm arm);
ModelArm parse_arm(const std::string& name);

struct TrainConfig {
  // defaults are the recipe for the default synthetic task
  double learning_rate = 0.15;
  int batch_size = 16;
  int epochs = 100;
  double lambda = 0.2;
  double momentum = 0.5;
  std::uint64_t seed = 1;
  ModelArm arm = ModelArm::CoCnn;
  int branches = 3;
  int hidden_dim = 8;
  bool global_first = true;
  bool group_local_trunk = true;

  void validate() const;
  // multibranch is the cocnn path with the context weight pinned to zero
  double effective_lambda() const {
    return arm == ModelArm::MultiBranch ? 0.0 : lambda;
  }
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double mean_accuracy = 0.0;  // NaN when no validation split given
};

struct TrainResult {
  ToyModelParams params;
  ModelArm arm = ModelArm::CoCnn;
  double lambda = 0.0;
  std::vector<EpochStats> log;
};

// Plain SGD (optional momentum) over shuffled minibatches. Single threaded,
// fixed accumulation order: same seed, same bytes. Throws DivergenceError
// when scores or the running loss stop being finite.
TrainResult train(const Dataset& train_set,
                  const std::optional<Dataset>& val_set,
                  const CoOccurrencePriors& priors, const TrainConfig& config);

// forward_branches composed with the pooling layer.
Eigen::VectorXd predict(const Eigen::VectorXd& x, const ToyModelParams& params,
                        const CoOccurrencePriors& priors, double lambda);

// One score row per instance: pooled prediction for branch arms, sigmoid
// probabilities for the baseline arm.
Eigen::MatrixXd score_dataset(const Dataset& dataset,
                              const ToyModelParams& params,
                              const CoOccurrencePriors& priors, double lambda,
                              ModelArm arm);

void save_checkpoint(const TrainResult& result,
                     const std::filesystem::path& path);
TrainResult load_checkpoint(const std::filesystem::path& path);
void save_train_log_csv(const std::vector<EpochStats>& log,
                        const std::filesystem::path& path);

}  // namespace aap
