#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ccgm/datagen/dataset.hpp"

namespace data = ccgm::data;

namespace {

double column_mean(const ccgm::diff::Matrix& m, std::size_t col) {
  double s = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, col);
  return s / static_cast<double>(m.rows());
}

}  // namespace

TEST(Checkmark, RulesHoldOnEveryRow) {
  const auto ds = data::gen_checkmark(2000, 3);
  ds.validate();
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    EXPECT_EQ(ds.features(r, 2), -ds.features(r, 1));
    EXPECT_EQ(ds.labels(r, 0), ds.features(r, 0) > 0.0 ? 1.0 : 0.0);
    EXPECT_EQ(ds.labels(r, 2), 1.0 - ds.labels(r, 1));
    EXPECT_EQ(ds.labels(r, 3), ds.labels(r, 0) * ds.labels(r, 2));
  }
}

TEST(Checkmark, GroundTruthGraph) {
  const auto ds = data::gen_checkmark(5, 1);
  ASSERT_TRUE(ds.ground_truth_graph);
  std::set<std::string> edges;
  for (const auto& e : *ds.ground_truth_graph) edges.insert(data::edge_string(ds.concept_names, e));
  EXPECT_EQ(edges, (std::set<std::string>{"b->c", "a->d", "b->d"}));
}

TEST(Checkmark, ZeroRowsRejected) { EXPECT_THROW(data::gen_checkmark(0, 1), std::invalid_argument); }

TEST(Checkmark, LabelMeanNearHalf) {
  const auto ds = data::gen_checkmark(10000, 1);
  EXPECT_NEAR(column_mean(ds.labels, 0), 0.5, 0.02);
}

TEST(Checkmark, DeterministicInSeed) {
  EXPECT_EQ(data::gen_checkmark(50, 9).features, data::gen_checkmark(50, 9).features);
  EXPECT_FALSE(data::gen_checkmark(50, 9).features == data::gen_checkmark(50, 10).features);
}

TEST(Scm, DspritesLiteNoiselessObeysEquations) {
  auto scm = data::dsprites_lite_scm();
  scm.value_jitter = 0.0;
  const auto ds = data::gen_scm_dataset(scm, 3000, 2, 0.0);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    const int shape = static_cast<int>(ds.labels(r, 0));
    const int size = static_cast<int>(ds.labels(r, 1));
    const int top = static_cast<int>(ds.labels(r, 2));
    const int right = static_cast<int>(ds.labels(r, 3));
    const int red = static_cast<int>(ds.labels(r, 4));
    if (shape && right) EXPECT_EQ(size, 1);
    if (shape && top) EXPECT_EQ(red, 1);
    // Without jitter the features carry the true values as +-1.
    for (std::size_t v = 0; v < 6; ++v) EXPECT_EQ(ds.features(r, v), 2.0 * ds.labels(r, v) - 1.0);
  }
}

namespace {

int identity_rule(std::span<const int> parents) { return parents[0]; }

data::GroundTruthScm identity_scm() {
  data::GroundTruthScm scm;
  scm.variables = {"u", "v"};
  scm.equations = {data::root_equation(0.3), data::deterministic_equation({0}, identity_rule)};
  return scm;
}

}  // namespace

TEST(Scm, LabelNoiseFlipsEachSideAtRate) {
  const auto ds = data::gen_scm_dataset(identity_scm(), 10000, 4, 0.1);
  for (std::size_t v = 0; v < 2; ++v) {
    std::size_t flipped = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) flipped += ds.labels(r, v) != (ds.features(r, v) > 0.0 ? 1.0 : 0.0);
    EXPECT_NEAR(static_cast<double>(flipped) / 10000.0, 0.1, 0.02);
  }
}

TEST(Scm, SingleRootIsBernoulli) {
  data::GroundTruthScm scm;
  scm.variables = {"r"};
  scm.equations = {data::root_equation(0.3)};
  const auto ds = data::gen_scm_dataset(scm, 10000, 5, 0.0);
  EXPECT_NEAR(column_mean(ds.labels, 0), 0.3, 0.02);
}

TEST(Scm, CyclicSpecRejected) {
  data::GroundTruthScm scm;
  scm.variables = {"p", "q"};
  scm.equations = {data::deterministic_equation({1}, identity_rule), data::deterministic_equation({0}, identity_rule)};
  EXPECT_THROW(data::gen_scm_dataset(scm, 10, 1, 0.0), std::invalid_argument);
}

TEST(Scm, NoiseOutOfRangeRejected) {
  EXPECT_THROW(data::gen_scm_dataset(identity_scm(), 10, 1, 0.5), std::invalid_argument);
}

TEST(Incompleteness, ExposedConceptCounts) {
  EXPECT_EQ(data::gen_incompleteness(100, 1, 0.0).concept_count(), 11u);
  EXPECT_EQ(data::gen_incompleteness(100, 1, 0.9).concept_count(), 2u);
  EXPECT_THROW(data::gen_incompleteness(100, 1, 1.0), std::invalid_argument);
}

TEST(Incompleteness, ExposedColumnsAreSubsetOfFullDataset) {
  const auto full = data::gen_incompleteness(300, 7, 0.0);
  const auto part = data::gen_incompleteness(300, 7, 0.7);
  ASSERT_EQ(part.concept_count(), 4u);
  EXPECT_EQ(part.features, full.features);
  for (std::size_t r = 0; r < 300; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(part.labels(r, c), full.labels(r, c));
    EXPECT_EQ(part.labels(r, 3), full.labels(r, 10));
  }
}

TEST(Split, SizesAndPartition) {
  const auto ds = data::gen_checkmark(100, 1);
  const auto idx = data::split_indices(100, {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(idx[0].size(), 80u);
  EXPECT_EQ(idx[1].size(), 10u);
  EXPECT_EQ(idx[2].size(), 10u);
  std::set<std::size_t> all;
  for (const auto& part : idx) all.insert(part.begin(), part.end());
  EXPECT_EQ(all.size(), 100u);
  const auto parts = data::split_dataset(ds, {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(parts[0].rows(), 80u);
  EXPECT_EQ(parts[2].ground_truth_graph, ds.ground_truth_graph);
}

TEST(Split, SeedDeterminism) {
  EXPECT_EQ(data::split_indices(100, {0.8, 0.1, 0.1}, 3), data::split_indices(100, {0.8, 0.1, 0.1}, 3));
  const auto a = data::split_indices(100, {0.8, 0.1, 0.1}, 3);
  const auto b = data::split_indices(100, {0.8, 0.1, 0.1}, 4);
  EXPECT_NE(a[0], b[0]);
  EXPECT_EQ(a[0].size(), b[0].size());
}

TEST(Split, BadFractionsRejected) {
  EXPECT_THROW(data::split_indices(100, {0.8, 0.1, 0.2}, 1), std::invalid_argument);
  EXPECT_THROW(data::split_indices(100, {1.0, 0.0, 0.0}, 1), std::invalid_argument);
}

TEST(Perturb, ZeroStrengthIsIdentity) {
  const auto ds = data::gen_checkmark(50, 1);
  EXPECT_EQ(data::perturb_features(ds, 0.0, 2).features, ds.features);
}

TEST(Perturb, LabelsUntouched) {
  const auto ds = data::gen_checkmark(50, 1);
  const auto p = data::perturb_features(ds, 2.0, 2);
  EXPECT_EQ(p.labels, ds.labels);
  EXPECT_FALSE(p.features == ds.features);
}

TEST(Csv, RoundTripWithSidecar) {
  const auto ds = data::gen_checkmark(20, 4);
  const auto path = std::filesystem::temp_directory_path() / "ccgm_test_checkmark.csv";
  data::write_csv(ds, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x_0,x_1,x_2,v_0,v_1,v_2,v_3");
  const auto back = data::read_csv(path);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.concept_names, ds.concept_names);
  EXPECT_EQ(back.ground_truth_graph, ds.ground_truth_graph);
  EXPECT_TRUE(std::filesystem::exists(data::metadata_path(path)));
  std::filesystem::remove(path);
  std::filesystem::remove(data::metadata_path(path));
}
