#include "aap/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "feature container IO assumes a little-endian host");

namespace aap {

using json = nlohmann::ordered_json;

void SyntheticSpec::validate() const {
  if (attributes < 2) throw DomainError("need at least 2 attributes");
  if (branches < 2) throw DomainError("need at least 2 branches");
  if (n_train < 1) throw DomainError("n_train must be positive");
  if (n_val < 0 || n_test < 0) throw DomainError("split sizes must be nonnegative");
  if (prototypes.empty()) throw DomainError("need at least one prototype");
  double weight_sum = 0.0;
  bool any_nonzero_pattern = false;
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    const auto& proto = prototypes[c];
    if (static_cast<int>(proto.pattern.size()) != attributes)
      throw DimensionError("prototype " + std::to_string(c) + " has " +
                           std::to_string(proto.pattern.size()) +
                           " entries, expected " + std::to_string(attributes));
    for (int v : proto.pattern)
      if (v != 0 && v != 1)
        throw DomainError("prototype " + std::to_string(c) +
                          " has a non-binary entry");
    if (!(proto.weight >= 0.0))
      throw DomainError("prototype " + std::to_string(c) +
                        " has a negative weight");
    weight_sum += proto.weight;
    if (std::accumulate(proto.pattern.begin(), proto.pattern.end(), 0) > 0)
      any_nonzero_pattern = true;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9)
    throw DomainError("prototype weights sum to " + format_double(weight_sum) +
                      ", expected 1");
  if (!(flip_prob >= 0.0 && flip_prob < 1.0))
    throw DomainError("flip_prob must lie in [0,1)");
  if (!(entangle_prob >= 0.0 && entangle_prob <= 1.0))
    throw DomainError("entangle_prob must lie in [0,1]");
  if (!any_nonzero_pattern && flip_prob == 0.0)
    throw DomainError("all prototypes are all-zero and flip_prob is 0: every "
                      "draw violates the nonzero-label constraint");
  if (static_cast<int>(group_of.size()) != attributes)
    throw DimensionError("group_of must assign every attribute a group");
  const int g = groups();
  for (int v : group_of)
    if (v < 0 || v >= g) throw DomainError("group index out of range");
  if (g < 2 && entangle_prob > 0.0)
    throw DomainError("entanglement needs at least 2 groups");
  if (input_dim != 0 && input_dim < derived_input_dim())
    throw DomainError("input_dim " + std::to_string(input_dim) +
                      " is smaller than the " +
                      std::to_string(derived_input_dim()) +
                      " columns the signal layout needs");
  if (!(signal_strength > 0.0)) throw DomainError("signal_strength must be positive");
  if (!(noise_sigma >= 0.0)) throw DomainError("noise_sigma must be nonnegative");
}

int SyntheticSpec::groups() const {
  int g = 0;
  for (int v : group_of) g = std::max(g, v + 1);
  return g;
}

int SyntheticSpec::slots_per_group() const {
  std::vector<int> count(static_cast<std::size_t>(groups()), 0);
  for (int v : group_of) ++count[static_cast<std::size_t>(v)];
  return *std::max_element(count.begin(), count.end());
}

int SyntheticSpec::derived_input_dim() const {
  return groups() * slots_per_group();
}

int SyntheticSpec::signal_column(int attribute, int group) const {
  // Slot = rank of the attribute within its home group; colliding slots in
  // other groups are what entanglement exploits.
  int slot = 0;
  for (int a = 0; a < attribute; ++a)
    if (group_of[static_cast<std::size_t>(a)] ==
        group_of[static_cast<std::size_t>(attribute)])
      ++slot;
  return group * slots_per_group() + slot;
}

SyntheticSpec SyntheticSpec::default_task() {
  SyntheticSpec spec;
  spec.attributes = 8;
  spec.branches = 3;
  spec.n_train = 5000;
  spec.n_val = 500;
  spec.n_test = 1000;
  // A rare clique (attributes 4, 5, 7 appear only together, with 3 and 6 as
  // partial anchors) gives the co-occurrence context something the per-slot
  // evidence alone recovers slowly under entanglement.
  spec.prototypes = {
      {{0, 0, 0, 1, 1, 1, 1, 1}, 0.18},
      {{1, 1, 0, 1, 0, 0, 0, 0}, 0.312},
      {{0, 0, 1, 1, 0, 0, 0, 0}, 0.272},
      {{0, 0, 1, 0, 0, 0, 1, 0}, 0.236},
  };
  spec.flip_prob = 0.02;
  spec.entangle_prob = 0.3;
  spec.group_of = {0, 0, 0, 0, 1, 1, 1, 1};
  spec.input_dim = 0;
  spec.signal_strength = 1.0;
  spec.noise_sigma = 0.3;
  spec.seed = 1;
  return spec;
}

void Dataset::validate() const {
  labels.validate();
  if (features.rows() != labels.y.rows())
    throw DimensionError("features have " + std::to_string(features.rows()) +
                         " rows, labels " + std::to_string(labels.y.rows()));
  if (!features.allFinite())
    throw DomainError("features contain non-finite values");
}

namespace {

double quantize_f32(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, bool keep_trace) {
  spec.validate();
  const int k = spec.attributes;
  const int g = spec.groups();
  const int d =
      spec.input_dim == 0 ? spec.derived_input_dim() : spec.input_dim;
  const long total = spec.n_train + spec.n_val + spec.n_test;

  std::vector<double> cum_weights;
  cum_weights.reserve(spec.prototypes.size());
  double acc = 0.0;
  for (const auto& proto : spec.prototypes) {
    acc += proto.weight;
    cum_weights.push_back(acc);
  }
  cum_weights.back() = 1.0;

  std::vector<int> signal_home(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    signal_home[static_cast<std::size_t>(j)] =
        spec.signal_column(j, spec.group_of[static_cast<std::size_t>(j)]);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::MatrixXd features(total, d);
  Eigen::MatrixXi labels(total, k);
  SyntheticData out;

  for (long i = 0; i < total; ++i) {
    // Labels: weighted prototype, independent bit flips, resample while
    // all-zero (an all-zero row has no normalizable target downstream).
    Eigen::VectorXi y(k);
    int attempts = 0;
    while (true) {
      if (++attempts > 10000)
        throw DomainError("label resampling did not produce a nonzero row "
                          "after 10000 tries; spec makes positives too rare");
      const double u = unit(rng);
      const std::size_t c = static_cast<std::size_t>(
          std::lower_bound(cum_weights.begin(), cum_weights.end(), u) -
          cum_weights.begin());
      const auto& pattern = spec.prototypes[c].pattern;
      bool any = false;
      for (int j = 0; j < k; ++j) {
        int bit = pattern[static_cast<std::size_t>(j)];
        if (spec.flip_prob > 0.0 && unit(rng) < spec.flip_prob) bit ^= 1;
        y(j) = bit;
        any = any || bit == 1;
      }
      if (any) break;
    }
    labels.row(i) = y.transpose();

    // Features: every positive attribute fires one signal column; with
    // probability entangle_prob it lands at the matching slot of a wrong
    // group, so the slot alone is ambiguous between colliding attributes.
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < k; ++j) {
      if (y(j) != 1) continue;
      const int home = spec.group_of[static_cast<std::size_t>(j)];
      int actual = home;
      if (spec.entangle_prob > 0.0 && unit(rng) < spec.entangle_prob) {
        std::uniform_int_distribution<int> other(0, g - 2);
        const int pick = other(rng);
        actual = pick >= home ? pick + 1 : pick;
      }
      const int col = actual == home ? signal_home[static_cast<std::size_t>(j)]
                                     : spec.signal_column(j, actual);
      x(col) += spec.signal_strength;
      if (keep_trace) out.trace.push_back({i, j, home, actual});
    }
    for (int col = 0; col < d; ++col) x(col) += spec.noise_sigma * gauss(rng);
    // Features round-trip through the f32 container; keep memory identical
    // to what a save/load cycle produces.
    for (int col = 0; col < d; ++col) features(i, col) = quantize_f32(x(col));
  }

  AttributeSchema schema = AttributeSchema::numbered(k);
  auto cut = [&](long begin, long count, const char* name) {
    Dataset ds;
    ds.features = features.middleRows(begin, count);
    ds.labels.schema = schema;
    ds.labels.y = labels.middleRows(begin, count);
    ds.split = name;
    return ds;
  };
  out.train = cut(0, spec.n_train, "train");
  out.val = cut(spec.n_train, spec.n_val, "val");
  out.test = cut(spec.n_train + spec.n_val, spec.n_test, "test");
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(current);
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  fields.push_back(current);
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

LabelMatrix load_labels_csv(const std::filesystem::path& path,
                            const std::optional<AttributeSchema>& expected,
                            long* dropped_zero_rows) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open labels file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line))
    throw ParseError("labels file '" + path.string() + "' is empty");
  LabelMatrix labels;
  labels.schema.names = split_fields(strip_cr(line));
  labels.schema.validate();
  if (expected && !(labels.schema == *expected))
    throw ParseError("labels file '" + path.string() +
                     "' carries a different attribute schema than expected");
  const int k = labels.schema.k();

  std::vector<Eigen::VectorXi> rows;
  long dropped = 0;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (static_cast<int>(fields.size()) != k)
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected " + std::to_string(k) + " fields, got " +
                       std::to_string(fields.size()));
    Eigen::VectorXi row(k);
    int sum = 0;
    for (int j = 0; j < k; ++j) {
      const std::string& f = fields[static_cast<std::size_t>(j)];
      if (f == "0")
        row(j) = 0;
      else if (f == "1")
        row(j) = 1;
      else
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": field " + std::to_string(j + 1) + " is '" + f +
                         "', expected 0 or 1");
      sum += row(j);
    }
    if (sum == 0) {
      ++dropped;  // no positive attribute: row has no normalizable target
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw DomainError("labels file '" + path.string() +
                      "' has no usable rows (all dropped or missing)");
  labels.y.resize(static_cast<Eigen::Index>(rows.size()), k);
  for (std::size_t r = 0; r < rows.size(); ++r)
    labels.y.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
  if (dropped_zero_rows) *dropped_zero_rows = dropped;
  return labels;
}

void save_labels_csv(const LabelMatrix& labels,
                     const std::filesystem::path& path) {
  labels.validate();
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  for (int j = 0; j < labels.k(); ++j) {
    if (j) out << ",";
    out << labels.schema.names[static_cast<std::size_t>(j)];
  }
  out << "\n";
  for (Eigen::Index r = 0; r < labels.y.rows(); ++r) {
    for (Eigen::Index c = 0; c < labels.y.cols(); ++c) {
      if (c) out << ",";
      out << labels.y(r, c);
    }
    out << "\n";
  }
}

namespace {

constexpr char kFeatureMagic[4] = {'A', 'A', 'P', 'T'};
constexpr std::uint8_t kFeatureVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw ParseError("feature file '" + path.string() + "' is truncated");
  return v;
}

}  // namespace

void save_features(const Eigen::MatrixXd& features,
                   const std::filesystem::path& path) {
  if (features.rows() < 1 || features.cols() < 1)
    throw DomainError("refusing to write an empty feature matrix");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  out.write(kFeatureMagic, 4);
  out.put(static_cast<char>(kFeatureVersion));
  write_u32(out, 2);
  write_u32(out, static_cast<std::uint32_t>(features.rows()));
  write_u32(out, static_cast<std::uint32_t>(features.cols()));
  std::vector<float> row(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c)
      row[static_cast<std::size_t>(c)] = static_cast<float>(features(r, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw ParseError("short write to '" + path.string() + "'");
}

Eigen::MatrixXd load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open feature file '" + path.string() + "'");
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw ParseError("feature file '" + path.string() +
                     "' has a bad magic header");
  const int version = in.get();
  if (version != kFeatureVersion)
    throw ParseError("feature file '" + path.string() +
                     "' has unsupported version " + std::to_string(version));
  const std::uint32_t rank = read_u32(in, path);
  if (rank != 2)
    throw ParseError("feature file '" + path.string() + "' has rank " +
                     std::to_string(rank) + ", expected 2");
  const std::uint32_t rows = read_u32(in, path);
  const std::uint32_t cols = read_u32(in, path);
  if (rows < 1 || cols < 1)
    throw ParseError("feature file '" + path.string() + "' has empty dims");
  Eigen::MatrixXd features(rows, cols);
  std::vector<float> row(cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float))))
      throw ParseError("feature file '" + path.string() +
                       "' is truncated at row " + std::to_string(r));
    for (std::uint32_t c = 0; c < cols; ++c)
      features(r, c) = static_cast<double>(row[c]);
  }
  return features;
}

std::vector<Dataset> split_dataset(const Dataset& dataset,
                                   const std::vector<double>& ratios,
                                   std::uint64_t seed) {
  dataset.validate();
  if (ratios.size() < 2) throw DomainError("need at least 2 split ratios");
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw DomainError("split ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw DomainError("split ratios sum to " + format_double(sum) +
                      ", expected 1");

  const long n = dataset.n();
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Dataset> parts;
  double cum = 0.0;
  long begin = 0;
  for (std::size_t s = 0; s < ratios.size(); ++s) {
    cum += ratios[s];
    const long end = s + 1 == ratios.size()
                         ? n
                         : std::llround(cum * static_cast<double>(n));
    Dataset part;
    part.labels.schema = dataset.labels.schema;
    const long count = end - begin;
    part.features.resize(count, dataset.features.cols());
    part.labels.y.resize(count, dataset.labels.y.cols());
    for (long i = 0; i < count; ++i) {
      const long src = order[static_cast<std::size_t>(begin + i)];
      part.features.row(i) = dataset.features.row(src);
      part.labels.y.row(i) = dataset.labels.y.row(src);
    }
    if (ratios.size() == 3)
      part.split = s == 0 ? "train" : (s == 1 ? "val" : "test");
    else
      part.split = "part" + std::to_string(s);
    parts.push_back(std::move(part));
    begin = end;
  }
  return parts;
}

namespace {

json spec_to_json(const SyntheticSpec& spec) {
  json j;
  j["format"] = "aap-synth-spec";
  j["version"] = 1;
  j["attributes"] = spec.attributes;
  j["branches"] = spec.branches;
  j["n_train"] = spec.n_train;
  j["n_val"] = spec.n_val;
  j["n_test"] = spec.n_test;
  json protos = json::array();
  for (const auto& proto : spec.prototypes)
    protos.push_back({{"pattern", proto.pattern}, {"weight", proto.weight}});
  j["prototypes"] = std::move(protos);
  j["flip_prob"] = spec.flip_prob;
  j["entangle_prob"] = spec.entangle_prob;
  j["group_of"] = spec.group_of;
  j["input_dim"] = spec.input_dim;
  j["signal_strength"] = spec.signal_strength;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  return j;
}

SyntheticSpec spec_from_json(const json& j, const std::string& origin) {
  try {
    if (j.value("format", "") != "aap-synth-spec")
      throw ParseError(origin + ": not an aap-synth-spec file");
    if (j.value("version", 0) != 1)
      throw ParseError(origin + ": unsupported spec version");
    SyntheticSpec spec;
    spec.attributes = j.at("attributes").get<int>();
    spec.branches = j.at("branches").get<int>();
    spec.n_train = j.at("n_train").get<long>();
    spec.n_val = j.at("n_val").get<long>();
    spec.n_test = j.at("n_test").get<long>();
    spec.prototypes.clear();
    for (const auto& jp : j.at("prototypes"))
      spec.prototypes.push_back({jp.at("pattern").get<std::vector<int>>(),
                                 jp.at("weight").get<double>()});
    spec.flip_prob = j.at("flip_prob").get<double>();
    spec.entangle_prob = j.at("entangle_prob").get<double>();
    spec.group_of = j.at("group_of").get<std::vector<int>>();
    spec.input_dim = j.at("input_dim").get<int>();
    spec.signal_strength = j.at("signal_strength").get<double>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.validate();
    return spec;
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

}  // namespace

void save_synthetic_spec(const SyntheticSpec& spec,
                         const std::filesystem::path& path) {
  spec.validate();
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  out << spec_to_json(spec).dump(2) << "\n";
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open spec file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("spec file '" + path.string() + "': " + e.what());
  }
  return spec_from_json(j, path.string());
}

void save_dataset_dir(const SyntheticData& data, const SyntheticSpec& spec,
                      const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const Dataset* ds : {&data.train, &data.val, &data.test}) {
    if (ds->n() == 0) continue;
    save_labels_csv(ds->labels, dir / (ds->split + "_labels.csv"));
    save_features(ds->features, dir / (ds->split + "_features.bin"));
  }
  save_synthetic_spec(spec, dir / "spec.json");
}

Dataset load_dataset_dir(const std::filesystem::path& dir,
                         const std::string& split) {
  Dataset ds;
  ds.split = split;
  ds.labels = load_labels_csv(dir / (split + "_labels.csv"));
  ds.features = load_features(dir / (split + "_features.bin"));
  ds.validate();
  return ds;
}

}  // namespace aap
