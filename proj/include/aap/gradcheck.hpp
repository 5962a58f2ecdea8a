#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aap/pooling.hpp"

namespace aap {

struct GradCheckOptions {
  std::uint64_t seed = 1;
  int branches = 4;
  int attributes = 6;
  double lambda = 0.2;
  int trials = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  double denom_floor = 1e-4;  // floor of the relative-error denominator
  double margin = 1e-3;       // minimum argmax gap; tighter points resample
};

struct GradCheckEntry {
  int trial = 0;
  int row = 0;
  int col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::string target;  // "layer" or "model"
  GradCheckOptions options;
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  long failures = 0;
  int resamples = 0;
  bool pass = false;

  std::string table(std::size_t max_rows = 0) const;  // 0: all rows
  std::string summary_line() const;
};

double relative_error(double analytic, double numeric, double denom_floor);

// Random score matrices away from pooling ties, analytic layer gradient
// against central differences.
GradCheckReport check_layer_gradients(const GradCheckOptions& options);

// Same comparison for every trainable weight of a small randomly
// initialized model, loss taken through the full pooling pipeline.
GradCheckReport check_model_gradients(const GradCheckOptions& options,
                                      int input_dim = 8, int hidden_dim = 12,
                                      int model_branches = 3,
                                      int model_attributes = 4);

}  // namespace aap
