#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "ccgm/engine/causal.hpp"
#include "ccgm/model/checkpoint.hpp"
#include "fixtures.hpp"
#include "props/properties.hpp"

namespace model = ccgm::model;
namespace data = ccgm::data;
using ccgm::diff::Matrix;

namespace {

model::CgmModel small_model(std::size_t k = 3, std::size_t d = 4) {
  model::CgmConfig cfg;
  cfg.k = k;
  cfg.d = d;
  cfg.hidden_dim = 8;
  cfg.embed_dim = 4;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back("n" + std::to_string(i));
  return model::CgmModel(cfg, names);
}

double column_accuracy(const Matrix& probs, const Matrix& labels, std::size_t c) {
  std::size_t hit = 0;
  for (std::size_t r = 0; r < probs.rows(); ++r) hit += ccgm::engine::hard_state(probs(r, c)) == labels(r, c);
  return static_cast<double>(hit) / static_cast<double>(probs.rows());
}

std::filesystem::path temp_file(const std::string& stem) {
  return std::filesystem::temp_directory_path() / (stem + std::to_string(::getpid()) + ".json");
}

}  // namespace

TEST(Encode, ShapesAndDeterminism) {
  const auto m = small_model();
  const std::vector<double> x{0.1, -0.2, 0.3, 0.4};
  const auto u = m.encode_exogenous(x);
  ASSERT_EQ(u.size(), 3u);
  for (const auto& ui : u) {
    EXPECT_EQ(ui.rows(), 1u);
    EXPECT_EQ(ui.cols(), 8u);
  }
  const auto again = m.encode_exogenous(x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(ccgm::props::bit_equal(u[i], again[i]));
  EXPECT_THROW(m.encode_exogenous(std::vector<double>{1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(m.encode_exogenous(std::vector<double>{1.0, 2.0, std::nan(""), 0.0}), std::invalid_argument);
}

TEST(Encode, ZeroScorerGivesHalf) {
  auto m = small_model();
  m.param("scorer.W").value = Matrix(8, 1);
  m.param("scorer.b").value = Matrix(1, 1);
  const std::vector<double> u(8, 0.7);
  EXPECT_EQ(m.predict_copy(u), 0.5);
}

TEST(Mixture, EndpointsAndRange) {
  const std::vector<double> pos{1.5, -2.0};
  const std::vector<double> neg{0.25, 3.0};
  EXPECT_EQ(model::mix_endogenous_embedding(1.0, pos, neg), pos);
  EXPECT_EQ(model::mix_endogenous_embedding(0.0, pos, neg), neg);
  EXPECT_THROW(model::mix_endogenous_embedding(1.5, pos, neg), std::invalid_argument);
  EXPECT_THROW(model::mix_endogenous_embedding(-0.1, pos, neg), std::invalid_argument);
}

TEST(Endogenous, EmptyRowFallsBackToCopy) {
  const auto m = small_model();
  const std::vector<double> x{0.5, 0.1, -0.3, 0.9};
  const auto u = m.encode_exogenous(x);
  std::vector<Matrix> emb(3, Matrix(1, 4, 0.3));
  Matrix a(3, 3);
  a(1, 0) = 0.8;
  EXPECT_EQ(m.predict_endogenous(0, emb, a, u[0].values()), m.predict_copy(u[0].values()));
  EXPECT_NE(m.predict_endogenous(1, emb, a, u[1].values()), m.predict_copy(u[1].values()));
  EXPECT_THROW(m.predict_endogenous(5, emb, a, u[0].values()), std::invalid_argument);
}

TEST(Config, RejectsBadValues) {
  model::CgmConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lr = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.k = 2;
  cfg.seed = 42;
  cfg.lambda3 = 0.2;
  const auto back = model::CgmConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.lambda3, 0.2);
}

TEST(Training, CheckmarkCopiesAndTaskAccuracy) {
  const auto& t = ccgm::testing::trained_checkmark();
  const auto& test = t.parts[2];
  const auto& m = t.learned.model;
  // Copy predictions of the roots a and b.
  Matrix probs(test.rows(), m.k());
  for (std::size_t r = 0; r < test.rows(); ++r) {
    const auto u = m.encode_exogenous(test.features.row(r));
    for (std::size_t i = 0; i < m.k(); ++i) probs(r, i) = m.predict_copy(u[i].values());
  }
  EXPECT_GE(column_accuracy(probs, test.labels, 0), 0.97);
  EXPECT_GE(column_accuracy(probs, test.labels, 1), 0.97);
  // d given true parent values.
  const Matrix forced = m.teacher_forced(test.features, test.labels, m.adjacency_matrix());
  EXPECT_GE(column_accuracy(forced, test.labels, 3), 0.97);
}

TEST(Training, LossDecreases) {
  const auto& h = ccgm::testing::trained_checkmark().learned.history;
  ASSERT_GE(h.size(), 20u);
  EXPECT_LT(h.back().total, h.front().total);
  EXPECT_LT(h.back().copies, h.front().copies);
}

TEST(Training, StrongAcyclicityPriorGivesDag) {
  const auto ds = data::gen_checkmark(400, 3);
  const auto parts = data::split_dataset(ds, {0.8, 0.1, 0.1}, 3);
  model::CgmConfig cfg = model::config_for(ds, {});
  cfg.lambda2 = 100.0;
  cfg.epochs = 60;
  cfg.seed = 3;
  const auto result = model::train_cgm(parts[0], parts[1], cfg);
  EXPECT_FALSE(ccgm::graph::has_cycle(result.model.adjacency_matrix()));
  EXPECT_TRUE(ccgm::props::permutation_acyclic(result.model.adjacency_matrix()));
}

TEST(Training, FixedGraphKeepsEdges) {
  const auto& fixed = ccgm::testing::trained_checkmark_fixed().model;
  const Matrix a = fixed.adjacency_matrix();
  Matrix expected(4, 4);
  expected(2, 1) = 1.0;  // b -> c
  expected(3, 0) = 1.0;  // a -> d
  expected(3, 1) = 1.0;  // b -> d
  EXPECT_EQ(a, expected);
}

TEST(Training, RetrainIsBitIdentical) {
  const auto ds = data::gen_checkmark(200, 5);
  const auto parts = data::split_dataset(ds, {0.8, 0.1, 0.1}, 5);
  model::CgmConfig cfg = model::config_for(ds, {});
  cfg.epochs = 15;
  cfg.seed = 5;
  const auto a = model::train_cgm(parts[0], parts[1], cfg);
  const auto b = model::train_cgm(parts[0], parts[1], cfg);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  EXPECT_TRUE(ccgm::props::bit_equal(a.best_val_accuracy, b.best_val_accuracy));
  EXPECT_TRUE(ccgm::props::bit_equal(a.model.adjacency().weights().value, b.model.adjacency().weights().value));
  EXPECT_TRUE(ccgm::props::bit_equal(ccgm::engine::unfold_predict(a.model, parts[2].features).probs,
                                     ccgm::engine::unfold_predict(b.model, parts[2].features).probs));
}

TEST(Training, DimensionMismatchRejected) {
  const auto ds = data::gen_checkmark(50, 1);
  model::CgmConfig cfg = model::config_for(ds, {});
  cfg.d = 7;
  EXPECT_THROW(model::train_cgm(ds, ds, cfg), std::invalid_argument);
}

TEST(Checkpoint, RoundTripBitExact) {
  const auto& t = ccgm::testing::trained_checkmark();
  const auto r = ccgm::props::checkpoint_round_trip(t.learned.model, t.parts[2].features);
  EXPECT_TRUE(r.passed) << r.detail;
}

TEST(Checkpoint, CorruptionRejected) {
  auto doc = model::checkpoint_to_json(model::to_checkpoint(small_model()));
  auto& first = doc["params"]["encoder.W"]["values"][0];
  std::string hex = first.get<std::string>();
  hex[15] = hex[15] == '0' ? '1' : '0';
  first = hex;
  EXPECT_THROW(model::checkpoint_from_json(doc), std::runtime_error);
}

TEST(Checkpoint, VersionMismatchRejected) {
  auto doc = model::checkpoint_to_json(model::to_checkpoint(small_model()));
  doc["version"] = "0";
  try {
    model::checkpoint_from_json(doc);
    FAIL() << "expected rejection";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, TruncatedFileRejected) {
  const auto path = temp_file("ccgm_trunc");
  model::save_cgm(small_model(), path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_THROW(model::load_cgm(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Checkpoint, EncodeDoubleIsExact) {
  for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-310, -123456.789}) {
    EXPECT_TRUE(ccgm::props::bit_equal(model::decode_double(model::encode_double(v)), v));
  }
  EXPECT_THROW(model::decode_double("xyz"), std::runtime_error);
}

TEST(PathEquivalence, TeacherForcedEqualsUnfold) {
  const auto& t = ccgm::testing::trained_checkmark();
  const auto r = ccgm::props::path_equivalence(t.learned.model, t.parts[2].features, 17);
  EXPECT_TRUE(r.passed) << r.detail;
  const auto rf = ccgm::props::path_equivalence(ccgm::testing::trained_checkmark_fixed().model,
                                                t.parts[2].features, 18);
  EXPECT_TRUE(rf.passed) << rf.detail;
}
