#include <optional>
#include <utility>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aap/data.hpp"
#include "aap/gradcheck.hpp"
#include "aap/metrics.hpp"
#include "aap/model.hpp"
#include "aap/pooling.hpp"
#include "aap/priors.hpp"

namespace py = pybind11;

namespace {

aap::LabelMatrix labels_from_array(const Eigen::MatrixXi& y,
                                   const std::optional<std::vector<std::string>>& names) {
  aap::LabelMatrix labels;
  labels.schema = names ? aap::AttributeSchema{*names}
                        : aap::AttributeSchema::numbered(static_cast<int>(y.cols()));
  labels.y = y;
  labels.validate();
  return labels;
}

py::dict report_to_dict(const aap::GradCheckReport& report) {
  py::dict out;
  out["target"] = report.target;
  out["pass"] = report.pass;
  out["max_rel_err"] = report.max_rel_err;
  out["entries"] = static_cast<long>(report.entries.size());
  out["failures"] = report.failures;
  out["resamples"] = report.resamples;
  out["summary"] = report.summary_line();
  return out;
}

struct TrainedModel {
  aap::TrainResult result;

  Eigen::MatrixXd scores(const Eigen::MatrixXd& features,
                         const std::optional<aap::CoOccurrencePriors>& priors,
                         std::optional<double> lambda_override) const {
    const bool pooled = result.arm != aap::ModelArm::Baseline;
    if (pooled && !priors)
      throw aap::DomainError("this arm needs co-occurrence priors to score");
    aap::Dataset ds;
    ds.features = features;
    const double lambda =
        lambda_override ? *lambda_override : result.lambda;
    static const aap::CoOccurrencePriors empty;
    return aap::score_dataset(ds, result.params, priors ? *priors : empty,
                              lambda, result.arm);
  }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "attribute-aware pooling core";

  py::register_exception<aap::Error>(m, "Error");

  py::class_<aap::CoOccurrencePriors>(m, "CoOccurrencePriors")
      .def_property_readonly(
          "names",
          [](const aap::CoOccurrencePriors& p) { return p.schema.names; })
      .def_readonly("p", &aap::CoOccurrencePriors::p)
      .def_readonly("joint", &aap::CoOccurrencePriors::joint)
      .def_readonly("cond", &aap::CoOccurrencePriors::cond)
      .def_readonly("cond_neg", &aap::CoOccurrencePriors::cond_neg)
      .def_readonly("n", &aap::CoOccurrencePriors::n)
      .def_readonly("epsilon", &aap::CoOccurrencePriors::epsilon)
      .def("validate",
           [](const aap::CoOccurrencePriors& p) {
             const aap::PriorsValidation v = aap::validate_priors(p);
             return std::make_pair(v.all_pass(), v.to_string());
           })
      .def("save", [](const aap::CoOccurrencePriors& p,
                      const std::filesystem::path& path) {
        aap::save_priors(p, path);
      });

  m.def(
      "build_priors",
      [](const Eigen::MatrixXi& labels,
         const std::optional<std::vector<std::string>>& names, double epsilon) {
        return aap::build_priors(labels_from_array(labels, names), epsilon);
      },
      py::arg("labels"), py::arg("names") = std::nullopt,
      py::arg("epsilon") = 0.0);
  m.def("load_priors", &aap::load_priors, py::arg("path"));

  py::class_<aap::AapForwardCache>(m, "AapForwardCache")
      .def_readonly("branch_probs", &aap::AapForwardCache::branch_probs)
      .def_readonly("context", &aap::AapForwardCache::context)
      .def_readonly("context_argmax", &aap::AapForwardCache::context_argmax)
      .def_readonly("aux", &aap::AapForwardCache::aux)
      .def_readonly("combined", &aap::AapForwardCache::combined)
      .def_readonly("col_max", &aap::AapForwardCache::col_max)
      .def_readonly("col_argmax", &aap::AapForwardCache::col_argmax)
      .def_readonly("prediction", &aap::AapForwardCache::prediction)
      .def_readonly("lam", &aap::AapForwardCache::lambda);

  m.def(
      "local_max_pool",
      [](const Eigen::MatrixXd& probs) {
        auto pooled = aap::local_max_pool(probs);
        return std::make_pair(pooled.context, pooled.argmax);
      },
      py::arg("branch_probs"));
  m.def("hard_indicator", &aap::hard_indicator, py::arg("context"),
        py::arg("tau") = 0.5);
  m.def("auxiliary_hard", &aap::auxiliary_hard, py::arg("indicator"),
        py::arg("priors"));
  m.def("auxiliary_soft", &aap::auxiliary_soft, py::arg("context"),
        py::arg("priors"));
  m.def(
      "aap_forward",
      [](const Eigen::MatrixXd& probs, const aap::CoOccurrencePriors& priors,
         double lam) {
        return aap::aap_forward(probs, priors, aap::AapConfig{lam, 0.5});
      },
      py::arg("branch_probs"), py::arg("priors"), py::arg("lam") = 0.2);
  m.def("aap_loss", &aap::aap_loss, py::arg("prediction"), py::arg("y"));
  m.def(
      "aap_backward",
      [](const aap::AapForwardCache& cache, const Eigen::VectorXi& y,
         const aap::CoOccurrencePriors& priors, double lam) {
        return aap::aap_backward(cache, y, priors, aap::AapConfig{lam, 0.5});
      },
      py::arg("cache"), py::arg("y"), py::arg("priors"), py::arg("lam") = 0.2);
  m.def(
      "finite_difference_grad",
      [](const Eigen::MatrixXd& probs, const Eigen::VectorXi& y,
         const aap::CoOccurrencePriors& priors, double lam, double h) {
        return aap::finite_difference_grad(probs, y, priors,
                                           aap::AapConfig{lam, 0.5}, h);
      },
      py::arg("branch_probs"), py::arg("y"), py::arg("priors"),
      py::arg("lam") = 0.2, py::arg("h") = 1e-5);

  auto make_options = [](std::uint64_t seed, int branches, int attributes,
                         double lam, int trials, double step, double tolerance) {
    aap::GradCheckOptions options;
    options.seed = seed;
    options.branches = branches;
    options.attributes = attributes;
    options.lambda = lam;
    options.trials = trials;
    options.step = step;
    options.tolerance = tolerance;
    return options;
  };
  m.def(
      "check_layer_gradients",
      [make_options](std::uint64_t seed, int branches, int attributes,
                     double lam, int trials, double step, double tolerance) {
        return report_to_dict(aap::check_layer_gradients(make_options(
            seed, branches, attributes, lam, trials, step, tolerance)));
      },
      py::arg("seed") = 1, py::arg("branches") = 4, py::arg("attributes") = 6,
      py::arg("lam") = 0.2, py::arg("trials") = 100, py::arg("step") = 1e-5,
      py::arg("tolerance") = 1e-4);
  m.def(
      "check_model_gradients",
      [make_options](std::uint64_t seed, int branches, int attributes,
                     double lam, int trials, double step, double tolerance) {
        return report_to_dict(aap::check_model_gradients(make_options(
            seed, branches, attributes, lam, trials, step, tolerance)));
      },
      py::arg("seed") = 1, py::arg("branches") = 3, py::arg("attributes") = 4,
      py::arg("lam") = 0.2, py::arg("trials") = 10, py::arg("step") = 1e-5,
      py::arg("tolerance") = 1e-4);

  py::class_<aap::SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("attributes", &aap::SyntheticSpec::attributes)
      .def_readwrite("branches", &aap::SyntheticSpec::branches)
      .def_readwrite("n_train", &aap::SyntheticSpec::n_train)
      .def_readwrite("n_val", &aap::SyntheticSpec::n_val)
      .def_readwrite("n_test", &aap::SyntheticSpec::n_test)
      .def_readwrite("flip_prob", &aap::SyntheticSpec::flip_prob)
      .def_readwrite("entangle_prob", &aap::SyntheticSpec::entangle_prob)
      .def_readwrite("group_of", &aap::SyntheticSpec::group_of)
      .def_readwrite("input_dim", &aap::SyntheticSpec::input_dim)
      .def_readwrite("signal_strength", &aap::SyntheticSpec::signal_strength)
      .def_readwrite("noise_sigma", &aap::SyntheticSpec::noise_sigma)
      .def_readwrite("seed", &aap::SyntheticSpec::seed)
      .def_property(
          "prototypes",
          [](const aap::SyntheticSpec& spec) {
            std::vector<std::pair<std::vector<int>, double>> out;
            for (const auto& proto : spec.prototypes)
              out.emplace_back(proto.pattern, proto.weight);
            return out;
          },
          [](aap::SyntheticSpec& spec,
             const std::vector<std::pair<std::vector<int>, double>>& protos) {
            spec.prototypes.clear();
            for (const auto& [pattern, weight] : protos)
              spec.prototypes.push_back({pattern, weight});
          });
  m.def("default_synthetic_spec", &aap::SyntheticSpec::default_task);
  m.def(
      "generate_synthetic",
      [](const aap::SyntheticSpec& spec) {
        const aap::SyntheticData data = aap::generate_synthetic(spec);
        py::dict out;
        for (const aap::Dataset* ds : {&data.train, &data.val, &data.test})
          out[ds->split.c_str()] =
              std::make_pair(ds->features, ds->labels.y);
        return out;
      },
      py::arg("spec"));

  m.def("binarize",
        py::overload_cast<const Eigen::MatrixXd&, const Eigen::VectorXd&>(
            &aap::binarize),
        py::arg("scores"), py::arg("thresholds"));
  m.def("calibrate_thresholds", &aap::calibrate_thresholds, py::arg("scores"),
        py::arg("labels"));
  m.def("mean_accuracy", &aap::mean_accuracy, py::arg("preds"),
        py::arg("labels"));
  m.def(
      "example_based",
      [](const Eigen::MatrixXi& preds, const Eigen::MatrixXi& labels) {
        const aap::ExampleBasedMetrics e = aap::example_based(preds, labels);
        py::dict out;
        out["accuracy"] = e.accuracy;
        out["precision"] = e.precision;
        out["recall"] = e.recall;
        out["f1"] = e.f1;
        return out;
      },
      py::arg("preds"), py::arg("labels"));
  m.def(
      "evaluate",
      [](const Eigen::MatrixXd& scores, const Eigen::MatrixXi& labels,
         const Eigen::VectorXd& thresholds,
         const std::optional<std::vector<std::string>>& names) {
        const std::vector<std::string> use_names =
            names ? *names
                  : aap::AttributeSchema::numbered(
                        static_cast<int>(scores.cols()))
                        .names;
        const aap::MetricsReport report =
            aap::evaluate(scores, labels, thresholds, use_names);
        py::dict out;
        out["mA"] = report.mean_acc;
        out["example_accuracy"] = report.example.accuracy;
        out["example_precision"] = report.example.precision;
        out["example_recall"] = report.example.recall;
        out["example_f1"] = report.example.f1;
        out["table"] = report.table();
        return out;
      },
      py::arg("scores"), py::arg("labels"), py::arg("thresholds"),
      py::arg("names") = std::nullopt);

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_property_readonly(
          "arm",
          [](const TrainedModel& model) {
            return std::string(aap::arm_name(model.result.arm));
          })
      .def_property_readonly(
          "lam", [](const TrainedModel& model) { return model.result.lambda; })
      .def_property_readonly(
          "log",
          [](const TrainedModel& model) {
            std::vector<std::tuple<int, double, double>> out;
            for (const auto& e : model.result.log)
              out.emplace_back(e.epoch, e.loss, e.mean_accuracy);
            return out;
          })
      .def("scores", &TrainedModel::scores, py::arg("features"),
           py::arg("priors") = std::nullopt, py::arg("lam") = std::nullopt)
      .def("save", [](const TrainedModel& model,
                      const std::filesystem::path& path) {
        aap::save_checkpoint(model.result, path);
      });

  m.def(
      "train_model",
      [](const Eigen::MatrixXd& features, const Eigen::MatrixXi& labels,
         const std::optional<aap::CoOccurrencePriors>& priors,
         const std::string& arm, double lr, int batch, int epochs, double lam,
         double momentum, std::uint64_t seed, int branches, int hidden,
         bool global_first, bool group_local_trunk,
         const std::optional<Eigen::MatrixXd>& val_features,
         const std::optional<Eigen::MatrixXi>& val_labels) {
        aap::Dataset train_set;
        train_set.features = features;
        train_set.labels = labels_from_array(labels, std::nullopt);
        train_set.split = "train";
        std::optional<aap::Dataset> val_set;
        if (val_features && val_labels) {
          aap::Dataset v;
          v.features = *val_features;
          v.labels = labels_from_array(*val_labels, std::nullopt);
          v.split = "val";
          val_set = std::move(v);
        }
        aap::TrainConfig config;
        config.arm = aap::parse_arm(arm);
        config.learning_rate = lr;
        config.batch_size = batch;
        config.epochs = epochs;
        config.lambda = lam;
        config.momentum = momentum;
        config.seed = seed;
        config.branches = branches;
        config.hidden_dim = hidden;
        config.global_first = global_first;
        config.group_local_trunk = group_local_trunk;
        const bool pooled = config.arm != aap::ModelArm::Baseline;
        if (pooled && !priors)
          throw aap::DomainError("this arm needs co-occurrence priors");
        static const aap::CoOccurrencePriors empty;
        TrainedModel model;
        model.result = aap::train(train_set, val_set,
                                  priors ? *priors : empty, config);
        return model;
      },
      py::arg("features"), py::arg("labels"), py::arg("priors") = std::nullopt,
      py::arg("arm") = "cocnn", py::arg("lr") = 0.15, py::arg("batch") = 16,
      py::arg("epochs") = 100, py::arg("lam") = 0.2, py::arg("momentum") = 0.5,
      py::arg("seed") = 1, py::arg("branches") = 3, py::arg("hidden") = 8,
      py::arg("global_first") = true, py::arg("group_local_trunk") = true,
      py::arg("val_features") = std::nullopt,
      py::arg("val_labels") = std::nullopt);
  m.def(
      "load_model",
      [](const std::filesystem::path& path) {
        TrainedModel model;
        model.result = aap::load_checkpoint(path);
        return model;
      },
      py::arg("path"));
}
