#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "aap/data.hpp"
#include "aap/priors.hpp"

using namespace aap;
namespace fs = std::filesystem;

namespace {

// Unique path under the system temp dir, removed when the guard dies.
struct TempFile {
  fs::path path;
  explicit TempFile(const std::string& name) {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("aap_test_" + std::to_string(++counter) + "_" + name);
  }
  ~TempFile() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

SyntheticSpec clean_spec() {
  // Two groups, deterministic features: no flips, no entanglement, no noise.
  SyntheticSpec spec;
  spec.attributes = 4;
  spec.branches = 2;
  spec.n_train = 400;
  spec.n_val = 0;
  spec.n_test = 0;
  spec.prototypes = {{{1, 1, 0, 0}, 0.5}, {{0, 0, 1, 1}, 0.5}};
  spec.flip_prob = 0.0;
  spec.entangle_prob = 0.0;
  spec.group_of = {0, 0, 1, 1};
  spec.signal_strength = 1.0;
  spec.noise_sigma = 0.0;
  spec.seed = 7;
  return spec;
}

bool rows_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

}  // namespace

TEST_CASE("signal layout: slots collide across groups") {
  const SyntheticSpec spec = SyntheticSpec::default_task();
  CHECK(spec.groups() == 2);
  CHECK(spec.slots_per_group() == 4);
  CHECK(spec.derived_input_dim() == 8);
  // Attribute 0 (group 0, slot 0) and attribute 4 (group 1, slot 0) share
  // column 4 when attribute 0 entangles into group 1.
  CHECK(spec.signal_column(0, 0) == 0);
  CHECK(spec.signal_column(4, 1) == 4);
  CHECK(spec.signal_column(0, 1) == spec.signal_column(4, 1));
  CHECK(spec.signal_column(3, 0) == 3);
  CHECK(spec.signal_column(7, 1) == 7);
}

TEST_CASE("generation is bit-identical for a fixed seed") {
  SyntheticSpec spec = SyntheticSpec::default_task();
  spec.n_train = 200;
  spec.n_val = 50;
  spec.n_test = 50;
  const SyntheticData a = generate_synthetic(spec);
  const SyntheticData b = generate_synthetic(spec);
  CHECK(rows_equal(a.train.features, b.train.features));
  CHECK(rows_equal(a.val.features, b.val.features));
  CHECK(rows_equal(a.test.features, b.test.features));
  CHECK((a.train.labels.y.array() == b.train.labels.y.array()).all());
  CHECK((a.test.labels.y.array() == b.test.labels.y.array()).all());

  spec.seed = 2;
  const SyntheticData c = generate_synthetic(spec);
  CHECK_FALSE(rows_equal(a.train.features, c.train.features));
}

TEST_CASE("no flips, no noise, no entanglement: everything is exact") {
  const SyntheticSpec spec = clean_spec();
  const SyntheticData data = generate_synthetic(spec, true);
  REQUIRE(data.train.n() == 400);
  for (Eigen::Index i = 0; i < data.train.labels.y.rows(); ++i) {
    const auto row = data.train.labels.y.row(i);
    const bool is_first = row(0) == 1 && row(1) == 1 && row(2) == 0 && row(3) == 0;
    const bool is_second = row(0) == 0 && row(1) == 0 && row(2) == 1 && row(3) == 1;
    CHECK((is_first || is_second));
    // Each positive attribute fires exactly its home column at full strength.
    for (int j = 0; j < 4; ++j) {
      const double expected = row(j) == 1 ? spec.signal_strength : 0.0;
      CHECK(data.train.features(i, spec.signal_column(
                                       j, spec.group_of[static_cast<std::size_t>(
                                              j)])) == expected);
    }
  }
  for (const SignalPlacement& placement : data.trace)
    CHECK(placement.actual_group == placement.home_group);
}

TEST_CASE("empirical marginals track the prototype mixture") {
  SyntheticSpec spec = SyntheticSpec::default_task();
  spec.n_train = 10000;
  spec.n_val = 0;
  spec.n_test = 0;
  spec.flip_prob = 0.0;
  spec.entangle_prob = 0.0;
  spec.noise_sigma = 0.0;
  const SyntheticData data = generate_synthetic(spec);
  Eigen::VectorXd expected(8);
  for (int j = 0; j < 8; ++j) {
    double m = 0.0;
    for (const auto& proto : spec.prototypes)
      m += proto.weight * proto.pattern[static_cast<std::size_t>(j)];
    expected(j) = m;
  }
  const Eigen::VectorXd empirical =
      data.train.labels.y.cast<double>().colwise().mean();
  for (int j = 0; j < 8; ++j)
    CHECK(std::abs(empirical(j) - expected(j)) <= 0.02);
}

TEST_CASE("full entanglement never places a signal at home") {
  SyntheticSpec spec = clean_spec();
  spec.entangle_prob = 1.0;  // boundary value is legal
  spec.n_train = 300;
  const SyntheticData data = generate_synthetic(spec, true);
  REQUIRE(!data.trace.empty());
  for (const SignalPlacement& placement : data.trace) {
    CHECK(placement.actual_group != placement.home_group);
    CHECK(placement.actual_group >= 0);
    CHECK(placement.actual_group < spec.groups());
  }
}

TEST_CASE("perfectly co-occurring attributes show up in the priors") {
  SyntheticSpec spec = clean_spec();
  spec.n_train = 2000;
  const SyntheticData data = generate_synthetic(spec);
  const CoOccurrencePriors priors = build_priors(data.train.labels, 0.0);
  // Attributes 0 and 1 always fire together, 2 never fires with 0.
  CHECK(priors.cond(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(priors.cond(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(priors.cond(0, 2) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(priors.cond_neg(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(priors.cond_neg(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(validate_priors(priors).all_pass());
}

TEST_CASE("spec validation rejects impossible recipes") {
  SyntheticSpec spec = clean_spec();

  SUBCASE("all-zero prototypes with no flips can never satisfy nonzero labels") {
    spec.prototypes = {{{0, 0, 0, 0}, 1.0}};
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("weights must sum to one") {
    spec.prototypes[0].weight = 0.7;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("prototype length must match the attribute count") {
    spec.prototypes[0].pattern = {1, 0};
    CHECK_THROWS_AS(spec.validate(), DimensionError);
  }
  SUBCASE("flip probability of one never terminates") {
    spec.flip_prob = 1.0;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("entangle probability beyond one") {
    spec.entangle_prob = 1.5;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("entanglement needs a second group") {
    spec.group_of = {0, 0, 0, 0};
    spec.entangle_prob = 0.5;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("group map must cover every attribute") {
    spec.group_of = {0, 0, 1};
    CHECK_THROWS_AS(spec.validate(), DimensionError);
  }
  SUBCASE("explicit input_dim cannot undercut the layout") {
    spec.input_dim = 2;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
  SUBCASE("noise must be nonnegative") {
    spec.noise_sigma = -0.1;
    CHECK_THROWS_AS(spec.validate(), DomainError);
  }
}

TEST_CASE("labels CSV round-trips and reports dropped rows") {
  LabelMatrix labels;
  labels.schema = AttributeSchema::numbered(3);
  labels.y.resize(3, 3);
  labels.y << 1, 0, 1, 0, 1, 0, 1, 1, 1;

  TempFile file("labels.csv");
  save_labels_csv(labels, file.path);
  long dropped = -1;
  const LabelMatrix loaded = load_labels_csv(file.path, labels.schema, &dropped);
  CHECK(dropped == 0);
  CHECK(loaded.schema == labels.schema);
  CHECK((loaded.y.array() == labels.y.array()).all());

  // Append an all-zero row by hand; the loader drops and counts it.
  {
    std::ofstream out(file.path, std::ios::app);
    out << "0,0,0\n";
  }
  const LabelMatrix reloaded = load_labels_csv(file.path, {}, &dropped);
  CHECK(dropped == 1);
  CHECK(reloaded.y.rows() == 3);
}

TEST_CASE("labels CSV failures carry the offending location") {
  TempFile file("bad_labels.csv");

  SUBCASE("non-binary field") {
    std::ofstream(file.path) << "a,b\n1,0\n1,2\n";
    try {
      load_labels_csv(file.path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(":3:") != std::string::npos);
      CHECK(msg.find("'2'") != std::string::npos);
    }
  }
  SUBCASE("ragged row") {
    std::ofstream(file.path) << "a,b\n1,0,1\n";
    try {
      load_labels_csv(file.path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("expected 2 fields, got 3") !=
            std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_labels_csv(file.path / "nope.csv"), ParseError);
  }
  SUBCASE("only zero rows") {
    std::ofstream(file.path) << "a,b\n0,0\n";
    CHECK_THROWS_AS(load_labels_csv(file.path), DomainError);
  }
  SUBCASE("schema mismatch") {
    std::ofstream(file.path) << "a,b\n1,0\n";
    CHECK_THROWS_AS(load_labels_csv(file.path, AttributeSchema::numbered(2)),
                    ParseError);
  }
  SUBCASE("duplicate header names") {
    std::ofstream(file.path) << "a,a\n1,0\n";
    CHECK_THROWS(load_labels_csv(file.path));
  }
}

TEST_CASE("feature container round-trips bit-exactly") {
  SyntheticSpec spec = clean_spec();
  spec.noise_sigma = 0.3;
  spec.n_train = 50;
  const SyntheticData data = generate_synthetic(spec);

  TempFile file("features.bin");
  save_features(data.train.features, file.path);
  const Eigen::MatrixXd loaded = load_features(file.path);
  // Generated features are f32-quantized, so the round trip is exact.
  CHECK(rows_equal(loaded, data.train.features));
}

TEST_CASE("feature container rejects malformed files") {
  TempFile file("features.bin");
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  save_features(m, file.path);

  SUBCASE("corrupt magic") {
    std::fstream f(file.path,
                   std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
    f.close();
    CHECK_THROWS_AS(load_features(file.path), ParseError);
  }
  SUBCASE("truncated payload") {
    fs::resize_file(file.path, fs::file_size(file.path) - 5);
    CHECK_THROWS_AS(load_features(file.path), ParseError);
  }
  SUBCASE("unsupported version") {
    std::fstream f(file.path,
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(9);
    f.close();
    CHECK_THROWS_AS(load_features(file.path), ParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_features(file.path / "nope.bin"), ParseError);
  }
  SUBCASE("empty matrix refused on write") {
    CHECK_THROWS_AS(save_features(Eigen::MatrixXd(), file.path), DomainError);
  }
}

TEST_CASE("splitting shuffles but neither loses nor duplicates rows") {
  Dataset dataset;
  dataset.split = "all";
  dataset.labels.schema = AttributeSchema::numbered(2);
  const long n = 100;
  dataset.features.resize(n, 2);
  dataset.labels.y.resize(n, 2);
  for (long i = 0; i < n; ++i) {
    dataset.features(i, 0) = static_cast<double>(i);  // row id
    dataset.features(i, 1) = 0.5;
    dataset.labels.y(i, 0) = 1;
    dataset.labels.y(i, 1) = static_cast<int>(i % 2);
  }

  const std::vector<Dataset> parts = split_dataset(dataset, {0.8, 0.1, 0.1}, 5);
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].split == "train");
  CHECK(parts[1].split == "val");
  CHECK(parts[2].split == "test");
  CHECK(parts[0].n() == 80);
  CHECK(parts[1].n() == 10);
  CHECK(parts[2].n() == 10);

  std::set<long> seen;
  for (const Dataset& part : parts)
    for (long i = 0; i < part.n(); ++i)
      seen.insert(static_cast<long>(part.features(i, 0)));
  CHECK(seen.size() == static_cast<std::size_t>(n));

  // Same seed, same cut; different seed, different cut.
  const std::vector<Dataset> again = split_dataset(dataset, {0.8, 0.1, 0.1}, 5);
  CHECK(rows_equal(parts[0].features, again[0].features));
  const std::vector<Dataset> other = split_dataset(dataset, {0.8, 0.1, 0.1}, 6);
  CHECK_FALSE(rows_equal(parts[0].features, other[0].features));

  const std::vector<Dataset> halves = split_dataset(dataset, {0.5, 0.5}, 1);
  CHECK(halves[0].split == "part0");
  CHECK(halves[1].split == "part1");

  CHECK_THROWS_AS(split_dataset(dataset, {0.8, 0.1}, 1), DomainError);
  CHECK_THROWS_AS(split_dataset(dataset, {1.2, -0.2}, 1), DomainError);
  CHECK_THROWS_AS(split_dataset(dataset, {1.0}, 1), DomainError);
}

TEST_CASE("dataset directory save and load") {
  SyntheticSpec spec = clean_spec();
  spec.n_train = 60;
  spec.n_val = 20;
  spec.n_test = 20;
  spec.noise_sigma = 0.1;
  const SyntheticData data = generate_synthetic(spec);

  TempFile dir("dataset_dir");
  save_dataset_dir(data, spec, dir.path);
  CHECK(fs::exists(dir.path / "train_labels.csv"));
  CHECK(fs::exists(dir.path / "val_features.bin"));
  CHECK(fs::exists(dir.path / "spec.json"));

  const Dataset train = load_dataset_dir(dir.path, "train");
  CHECK(rows_equal(train.features, data.train.features));
  CHECK((train.labels.y.array() == data.train.labels.y.array()).all());

  const SyntheticSpec reloaded = load_synthetic_spec(dir.path / "spec.json");
  CHECK(reloaded.attributes == spec.attributes);
  CHECK(reloaded.seed == spec.seed);
  CHECK(reloaded.prototypes.size() == spec.prototypes.size());
  CHECK(reloaded.prototypes[0].weight == spec.prototypes[0].weight);

  CHECK_THROWS_AS(load_dataset_dir(dir.path, "nope"), ParseError);
}

TEST_CASE("synthetic spec file rejects unrelated JSON") {
  TempFile file("spec.json");
  std::ofstream(file.path) << "{\"format\": \"something-else\"}\n";
  CHECK_THROWS_AS(load_synthetic_spec(file.path), ParseError);
  std::ofstream(file.path) << "not json";
  CHECK_THROWS_AS(load_synthetic_spec(file.path), ParseError);
}
