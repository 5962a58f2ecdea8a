#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "aap/data.hpp"
#include "aap/gradcheck.hpp"
#include "aap/metrics.hpp"
#include "aap/model.hpp"
#include "aap/pooling.hpp"
#include "aap/priors.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUnexpected = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitCheckFailed = 3;

int thread_budget() {
  if (const char* env = std::getenv("AAP_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs fn(0..count-1) on up to thread_budget() workers. Results land by
// index, so the output does not depend on the worker count.
template <typename Fn>
void parallel_for(int count, Fn fn) {
  const int workers = std::min(count, thread_budget());
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct BuildPriorsArgs {
  std::string labels, out, heatmap;
  double epsilon = 0.0;
};

int cmd_build_priors(const BuildPriorsArgs& args) {
  long dropped = 0;
  const aap::LabelMatrix labels =
      aap::load_labels_csv(args.labels, std::nullopt, &dropped);
  if (dropped > 0)
    std::cerr << "warning: dropped " << dropped << " all-zero label rows\n";
  const aap::CoOccurrencePriors priors = aap::build_priors(labels, args.epsilon);
  const aap::PriorsValidation validation = aap::validate_priors(priors);
  std::cout << validation.to_string();
  aap::save_priors(priors, args.out);
  const fs::path heatmap = args.heatmap.empty()
                               ? fs::path(args.out).replace_extension(".heatmap.csv")
                               : fs::path(args.heatmap);
  aap::write_heatmap_csv(priors, heatmap);
  std::cout << "priors written to " << args.out << " (n=" << priors.n
            << ", k=" << priors.k() << "), heatmap to " << heatmap.string()
            << "\n";
  return validation.all_pass() ? kExitOk : kExitCheckFailed;
}

struct SynthArgs {
  std::string spec, out;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& args) {
  aap::SyntheticSpec spec = args.spec.empty()
                                ? aap::SyntheticSpec::default_task()
                                : aap::load_synthetic_spec(args.spec);
  spec.seed = args.seed;
  const aap::SyntheticData data = aap::generate_synthetic(spec);
  aap::save_dataset_dir(data, spec, args.out);
  std::cout << "wrote " << data.train.n() << "/" << data.val.n() << "/"
            << data.test.n() << " train/val/test instances (k="
            << spec.attributes << ", d=" << data.train.input_dim() << ") to "
            << args.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, priors, out;
  std::string arm = "cocnn";
  aap::TrainConfig config;
  bool branches_set = false;
  bool sweep = false;
};

aap::CoOccurrencePriors load_or_dummy_priors(const std::string& path,
                                             bool needed, int k) {
  if (!path.empty()) return aap::load_priors(path);
  if (needed)
    throw aap::DomainError("--priors is required for this arm");
  // Baseline never reads the tables; a uniform stand-in keeps signatures happy.
  aap::CoOccurrencePriors priors;
  priors.schema = aap::AttributeSchema::numbered(k);
  priors.p = Eigen::VectorXd::Constant(k, 0.5);
  priors.joint = Eigen::MatrixXd::Constant(k, k, 0.25);
  priors.joint.diagonal().setConstant(0.5);
  priors.cond = aap::build_conditional(priors.p, priors.joint);
  priors.cond_neg = aap::build_negative_conditional(priors.p, priors.joint);
  return priors;
}

int cmd_train(TrainArgs& args) {
  const aap::Dataset train_set = aap::load_dataset_dir(args.data, "train");
  std::optional<aap::Dataset> val_set;
  if (fs::exists(fs::path(args.data) / "val_labels.csv"))
    val_set = aap::load_dataset_dir(args.data, "val");

  args.config.arm = aap::parse_arm(args.arm);
  if (!args.branches_set) {
    const fs::path spec_path = fs::path(args.data) / "spec.json";
    if (fs::exists(spec_path))
      args.config.branches = aap::load_synthetic_spec(spec_path).branches;
  }
  const bool pooled = args.config.arm != aap::ModelArm::Baseline;
  const aap::CoOccurrencePriors priors =
      load_or_dummy_priors(args.priors, pooled, train_set.labels.k());

  fs::create_directories(args.out);

  if (args.sweep) {
    std::vector<double> lambdas;
    for (int i = 0; i <= 10; ++i) lambdas.push_back(0.05 * i);
    std::vector<double> scores(lambdas.size(), 0.0);
    if (!val_set)
      throw aap::DomainError("lambda sweep needs a val split in the data dir");
    parallel_for(static_cast<int>(lambdas.size()), [&](int i) {
      aap::TrainConfig config = args.config;
      config.arm = aap::ModelArm::CoCnn;
      config.lambda = lambdas[static_cast<std::size_t>(i)];
      const aap::TrainResult result = train(train_set, val_set, priors, config);
      const Eigen::MatrixXd val_scores = aap::score_dataset(
          *val_set, result.params, priors, result.lambda, result.arm);
      const Eigen::VectorXd thresholds =
          aap::calibrate_thresholds(val_scores, val_set->labels.y);
      scores[static_cast<std::size_t>(i)] = aap::mean_accuracy(
          aap::binarize(val_scores, thresholds), val_set->labels.y);
    });
    std::ofstream csv(fs::path(args.out) / "sweep_lambda.csv");
    csv << "lambda,mA\n";
    std::size_t best = 0;
    std::cout << "lambda   mA\n";
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      csv << aap::format_double(lambdas[i]) << ","
          << aap::format_double(scores[i]) << "\n";
      std::cout << aap::format_fixed(lambdas[i], 2) << "     "
                << aap::format_fixed(scores[i], 4) << "\n";
      if (scores[i] > scores[best]) best = i;
    }
    std::cout << "best lambda " << aap::format_fixed(lambdas[best], 2)
              << " with val mA " << aap::format_fixed(scores[best], 4) << "\n";
    return kExitOk;
  }

  const aap::TrainResult result = train(train_set, val_set, priors, args.config);
  aap::save_checkpoint(result, fs::path(args.out) / "checkpoint.json");
  aap::save_train_log_csv(result.log, fs::path(args.out) / "train_log.csv");
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::cout << "epoch " << last.epoch << ": loss "
              << aap::format_fixed(last.loss, 6);
    if (std::isfinite(last.mean_accuracy))
      std::cout << ", val mA " << aap::format_fixed(last.mean_accuracy, 4);
    std::cout << "\n";
  }
  std::cout << "checkpoint written to "
            << (fs::path(args.out) / "checkpoint.json").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, data, priors, out;
  std::string split = "test";
  double lambda = -1.0;  // <0: use the checkpoint's value
  double threshold = -1.0;
  bool calibrate = false;
};

int cmd_eval(const EvalArgs& args) {
  const aap::TrainResult result = aap::load_checkpoint(args.checkpoint);
  const aap::Dataset eval_set = aap::load_dataset_dir(args.data, args.split);
  const bool pooled = result.arm != aap::ModelArm::Baseline;
  const aap::CoOccurrencePriors priors =
      load_or_dummy_priors(args.priors, pooled, eval_set.labels.k());
  const double lambda = args.lambda >= 0.0 ? args.lambda : result.lambda;

  const Eigen::MatrixXd scores =
      aap::score_dataset(eval_set, result.params, priors, lambda, result.arm);
  Eigen::VectorXd thresholds;
  if (args.calibrate) {
    const aap::Dataset val_set = aap::load_dataset_dir(args.data, "val");
    const Eigen::MatrixXd val_scores =
        aap::score_dataset(val_set, result.params, priors, lambda, result.arm);
    thresholds = aap::calibrate_thresholds(val_scores, val_set.labels.y);
  } else {
    const double fallback = pooled
                                ? 1.0 / static_cast<double>(eval_set.labels.k())
                                : 0.5;
    thresholds = Eigen::VectorXd::Constant(
        eval_set.labels.k(), args.threshold >= 0.0 ? args.threshold : fallback);
  }

  const aap::MetricsReport report = aap::evaluate(
      scores, eval_set.labels.y, thresholds, eval_set.labels.schema.names);
  std::cout << report.table();
  if (!args.out.empty()) {
    fs::create_directories(args.out);
    std::ofstream summary(fs::path(args.out) / "metrics.csv");
    summary << report.summary_csv();
    std::ofstream per_attr(fs::path(args.out) / "per_attribute.csv");
    per_attr << report.per_attribute_csv();
    std::cout << "reports written to " << args.out << "\n";
  }
  return kExitOk;
}

struct GradCheckArgs {
  aap::GradCheckOptions options;
  std::string out;
  bool full_table = false;
};

int cmd_gradcheck(const GradCheckArgs& args) {
  const aap::GradCheckReport layer = aap::check_layer_gradients(args.options);
  aap::GradCheckOptions model_options = args.options;
  model_options.trials = std::max(1, args.options.trials / 10);
  const aap::GradCheckReport model = aap::check_model_gradients(model_options);

  for (const aap::GradCheckReport* report : {&layer, &model}) {
    std::cout << report->table(args.full_table ? 0 : 10);
    std::cout << report->summary_line() << "\n";
  }
  if (!args.out.empty()) {
    std::ofstream out(args.out);
    out << layer.table(0) << layer.summary_line() << "\n"
        << model.table(0) << model.summary_line() << "\n";
    std::cout << "full report written to " << args.out << "\n";
  }
  return layer.pass && model.pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute-aware pooling toolkit"};
  app.require_subcommand(1);

  BuildPriorsArgs priors_args;
  CLI::App* build_priors = app.add_subcommand(
      "build-priors", "build co-occurrence tables from a labels CSV");
  build_priors->add_option("--labels", priors_args.labels, "labels CSV")
      ->required();
  build_priors->add_option("--out", priors_args.out, "output priors JSON")
      ->required();
  build_priors->add_option("--epsilon", priors_args.epsilon,
                           "additive smoothing count");
  build_priors->add_option("--heatmap", priors_args.heatmap,
                           "conditional-table heatmap CSV path");

  SynthArgs synth_args;
  CLI::App* synth =
      app.add_subcommand("synth", "generate the synthetic entangled dataset");
  synth->add_option("--spec", synth_args.spec, "generator spec JSON");
  synth->add_option("--out", synth_args.out, "output dataset directory")
      ->required();
  synth->add_option("--seed", synth_args.seed, "generator seed")->required();

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train a model arm");
  train->add_option("--data", train_args.data, "dataset directory")->required();
  train->add_option("--priors", train_args.priors, "priors JSON");
  train->add_option("--out", train_args.out, "output directory")->required();
  train->add_option("--arm", train_args.arm,
                    "baseline | multibranch | cocnn")
      ->check(CLI::IsMember({"baseline", "multibranch", "cocnn"}));
  train->add_option("--lambda", train_args.config.lambda, "context weight");
  train->add_option("--lr", train_args.config.learning_rate, "learning rate");
  train->add_option("--epochs", train_args.config.epochs, "epochs");
  train->add_option("--batch", train_args.config.batch_size, "batch size");
  train->add_option("--momentum", train_args.config.momentum, "SGD momentum");
  train->add_option("--hidden", train_args.config.hidden_dim, "hidden width");
  CLI::Option* branches_opt =
      train->add_option("--branches", train_args.config.branches,
                        "branch count (default: dataset spec)");
  train->add_option("--seed", train_args.config.seed, "training seed")
      ->required();
  train->add_flag("--sweep-lambda", train_args.sweep,
                  "train across lambda 0..0.5 and report val mA");
  bool no_global = false, dense_trunk = false;
  train->add_flag("--no-global-first", no_global,
                  "drop the whole-vector first branch");
  train->add_flag("--dense-trunk", dense_trunk,
                  "disable the group connectivity mask");

  EvalArgs eval_args;
  CLI::App* eval =
      app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint JSON")
      ->required();
  eval->add_option("--data", eval_args.data, "dataset directory")->required();
  eval->add_option("--split", eval_args.split, "split name (default test)");
  eval->add_option("--priors", eval_args.priors, "priors JSON");
  eval->add_option("--lambda", eval_args.lambda,
                   "context weight (default: checkpoint value)");
  eval->add_option("--threshold", eval_args.threshold,
                   "global decision threshold");
  eval->add_flag("--calibrate", eval_args.calibrate,
                 "calibrate per-attribute thresholds on the val split");
  eval->add_option("--out", eval_args.out, "directory for CSV reports");

  GradCheckArgs grad_args;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "compare analytic gradients against central differences");
  gradcheck->add_option("--seed", grad_args.options.seed, "sampling seed");
  gradcheck->add_option("--m", grad_args.options.branches, "branch count");
  gradcheck->add_option("--k", grad_args.options.attributes, "attribute count");
  gradcheck->add_option("--lambda", grad_args.options.lambda, "context weight");
  gradcheck->add_option("--trials", grad_args.options.trials, "sampled points");
  gradcheck->add_option("--step", grad_args.options.step, "difference step");
  gradcheck->add_option("--tol", grad_args.options.tolerance,
                        "relative error tolerance");
  gradcheck->add_flag("--full-table", grad_args.full_table,
                      "print every entry instead of the head");
  gradcheck->add_option("--out", grad_args.out, "write the full report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (*build_priors) return cmd_build_priors(priors_args);
    if (*synth) return cmd_synth(synth_args);
    if (*train) {
      train_args.branches_set = branches_opt->count() > 0;
      train_args.config.global_first = !no_global;
      train_args.config.group_local_trunk = !dense_trunk;
      return cmd_train(train_args);
    }
    if (*eval) return cmd_eval(eval_args);
    if (*gradcheck) return cmd_gradcheck(grad_args);
    std::cerr << "no subcommand selected\n";
    return kExitBadInput;
  } catch (const aap::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const aap::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kExitUnexpected;
  }
}
