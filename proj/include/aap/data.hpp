#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aap/priors.hpp"

namespace aap {

struct Prototype {
  std::vector<int> pattern;  // k binary entries
  double weight = 0.0;
};

// Generator recipe for the synthetic multi-attribute task.
//
// Labels: draw a prototype by weight, flip each bit with flip_prob, resample
// while all-zero. Features: attributes live in groups; each group owns a
// block of columns and an attribute signals at its slot inside its group's
// block. With probability entangle_prob the signal lands at the same slot of
// a uniformly chosen wrong group instead, so slot activity alone cannot tell
// colliding attributes apart; co-occurrence context can. Gaussian noise on
// every column.
struct SyntheticSpec {
  int attributes = 8;  // k
  int branches = 3;    // m used by models trained on this data
  long n_train = 5000;
  long n_val = 500;
  long n_test = 1000;
  std::vector<Prototype> prototypes;
  double flip_prob = 0.05;      // in [0,1)
  double entangle_prob = 0.3;   // in [0,1]
  std::vector<int> group_of;    // attribute -> feature group
  int input_dim = 0;            // 0: groups * slots_per_group
  double signal_strength = 1.0;
  double noise_sigma = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
  int groups() const;
  int slots_per_group() const;
  int derived_input_dim() const;
  int signal_column(int attribute, int group) const;

  // The entangled two-group task the CLI and the acceptance run ship with.
  static SyntheticSpec default_task();
};

// Feature matrix plus labels for one split.
struct Dataset {
  Eigen::MatrixXd features;  // n x d, values exactly representable in f32
  LabelMatrix labels;
  std::string split;

  long n() const { return static_cast<long>(features.rows()); }
  int input_dim() const { return static_cast<int>(features.cols()); }
  void validate() const;
};

// Where one positive attribute's signal actually landed.
struct SignalPlacement {
  long instance = 0;
  int attribute = 0;
  int home_group = 0;
  int actual_group = 0;
};

struct SyntheticData {
  Dataset train, val, test;
  std::vector<SignalPlacement> trace;  // filled only when requested
};

SyntheticData generate_synthetic(const SyntheticSpec& spec,
                                 bool keep_trace = false);

// CSV with a header of attribute names and 0/1 fields. All-zero rows are
// dropped (they carry no l1-normalizable target); the count of dropped rows
// is reported through dropped_zero_rows when non-null.
LabelMatrix load_labels_csv(const std::filesystem::path& path,
                            const std::optional<AttributeSchema>& expected = {},
                            long* dropped_zero_rows = nullptr);
void save_labels_csv(const LabelMatrix& labels,
                     const std::filesystem::path& path);

// Feature container: magic "AAPT", version byte, u32 rank (always 2),
// u32 dims, then little-endian f32 values in row-major order.
Eigen::MatrixXd load_features(const std::filesystem::path& path);
void save_features(const Eigen::MatrixXd& features,
                   const std::filesystem::path& path);

// Shuffles with the given seed, then cuts at boundaries round(cum_ratio * n).
// Ratios must be nonnegative and sum to 1. Three parts are tagged
// train/val/test, otherwise part0..partN.
std::vector<Dataset> split_dataset(const Dataset& dataset,
                                   const std::vector<double>& ratios,
                                   std::uint64_t seed);

void save_synthetic_spec(const SyntheticSpec& spec,
                         const std::filesystem::path& path);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

// Writes {split}_labels.csv, {split}_features.bin for every split plus
// spec.json into dir.
void save_dataset_dir(const SyntheticData& data, const SyntheticSpec& spec,
                      const std::filesystem::path& dir);
Dataset load_dataset_dir(const std::filesystem::path& dir,
                         const std::string& split);

}  // namespace aap
