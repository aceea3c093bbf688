#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "gclrec/error.hpp"
#include "gclrec/synthetic.hpp"
#include "gclrec/trainer.hpp"
#include "support/fd.hpp"
#include "support/toy.hpp"

using namespace gclrec;
using gclrec::testing::numeric_gradient;
using gclrec::testing::random_matrix;
using gclrec::testing::relative_error;
using gclrec::testing::toy_graph;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.dim = 8;
  c.batch_size = 16;
  c.epochs = 3;
  c.learning_rate = 0.01;
  return c;
}

}  // namespace

TEST(Propagate, ZeroLayersIsIdentity) {
  const auto g = toy_graph(4, 5, 1);
  auto m = initialize_model(4, 5, small_config());
  m.layers = 0;
  EXPECT_EQ(propagate(m, normalized_adjacency(g)), m.base);
}

TEST(Propagate, NoEdgesDividesByLayerCount) {
  NormalizedAdjacency adj;
  adj.num_users = 2;
  adj.num_items = 3;
  adj.matrix.resize(5, 5);
  auto m = initialize_model(2, 3, small_config());
  EXPECT_TRUE(propagate(m, adj).isApprox(m.base / 4.0, 1e-15));
}

TEST(Propagate, TwoNodeOneLayerByHand) {
  InteractionGraph g({"u"}, {"i"}, {{0, 0, Split::kTrain}});
  EmbeddingModel m{1, 1, 2, 1, Matrix(2, 2)};
  m.base << 1, 2, 3, 4;
  Matrix expect(2, 2);
  expect << (1 + 3) / 2.0, (2 + 4) / 2.0, (3 + 1) / 2.0, (4 + 2) / 2.0;
  EXPECT_TRUE(propagate(m, normalized_adjacency(g)).isApprox(expect, 1e-15));
}

TEST(Propagate, DimensionMismatch) {
  const auto g = toy_graph(3, 3, 2);
  auto m = initialize_model(4, 3, small_config());
  EXPECT_THROW(propagate(m, normalized_adjacency(g)), ConfigError);
}

TEST(Propagate, Linearity) {
  const auto g = toy_graph(6, 7, 3);
  const Propagator op(std::make_shared<NormalizedAdjacency>(normalized_adjacency(g)), 3);
  const Matrix z1 = random_matrix(13, 4, 1), z2 = random_matrix(13, 4, 2);
  const Matrix lhs = op.forward(0.7 * z1 - 1.3 * z2);
  const Matrix rhs = 0.7 * op.forward(z1) - 1.3 * op.forward(z2);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Bpr, EqualItemsGiveLogTwo) {
  Matrix e = random_matrix(4, 3, 5);
  e.row(3) = e.row(2);
  const std::vector<Triple> t = {{0, 0, 1}, {1, 0, 1}};
  EXPECT_NEAR(bpr_loss(e, 2, t).loss, std::log(2.0), 1e-15);
}

TEST(Bpr, LargeMarginGoesToZero) {
  Matrix e(3, 1);
  e << 100.0, 10.0, -10.0;
  const std::vector<Triple> t = {{0, 0, 1}};
  EXPECT_LT(bpr_loss(e, 1, t).loss, 1e-100);
}

TEST(Bpr, EmptyBatch) {
  EXPECT_THROW(bpr_loss(Matrix::Zero(2, 2), 1, {}), ConfigError);
}

TEST(Bpr, GradientMatchesFiniteDifferences) {
  const std::vector<Triple> t = {{0, 0, 1}, {1, 2, 3}, {2, 1, 0}, {0, 3, 2}, {1, 1, 2}};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix e = random_matrix(7, 4, 10 + s);
    const auto f = [&](const Matrix& x) { return bpr_loss(x, 3, t).loss; };
    EXPECT_LT(relative_error(bpr_loss(e, 3, t).grad, numeric_gradient(f, e)), 1e-4);
  }
}

TEST(InfoNce, IdenticalRowsGiveNLogN) {
  const std::size_t n = 7;
  Matrix z = Matrix::Ones(n, 3);
  std::vector<Index> nodes(n);
  std::iota(nodes.begin(), nodes.end(), Index{0});
  EXPECT_NEAR(info_nce_loss(z, z, 1.0, nodes).loss, n * std::log(double(n)), 1e-12);
}

TEST(InfoNce, SingleNodeIsZero) {
  const Matrix z = random_matrix(3, 4, 1);
  const std::vector<Index> nodes = {1};
  EXPECT_NEAR(info_nce_loss(z, z * 2.0, 0.2, nodes).loss, 0.0, 1e-15);
}

TEST(InfoNce, ZeroRowNamesTheNode) {
  Matrix z = random_matrix(3, 2, 1);
  z.row(2).setZero();
  const std::vector<Index> nodes = {0, 2};
  try {
    info_nce_loss(z, z, 0.2, nodes);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("node 2"), std::string::npos);
  }
}

TEST(InfoNce, InvariantToRowScaling) {
  const Matrix a = random_matrix(5, 3, 4), b = random_matrix(5, 3, 5);
  const std::vector<Index> nodes = {0, 1, 2, 3, 4};
  Matrix scaled = a;
  for (int r = 0; r < 5; ++r) scaled.row(r) *= 0.3 + r;
  EXPECT_NEAR(info_nce_loss(a, b, 0.2, nodes).loss, info_nce_loss(scaled, b, 0.2, nodes).loss, 1e-10);
}

TEST(InfoNce, GradientMatchesFiniteDifferences) {
  const std::vector<Index> nodes = {0, 1, 2, 3, 4, 5};
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix a = random_matrix(6, 4, 20 + s), b = random_matrix(6, 4, 40 + s);
    const auto r = info_nce_loss(a, b, 0.2, nodes);
    const auto fa = [&](const Matrix& x) { return info_nce_loss(x, b, 0.2, nodes).loss; };
    const auto fb = [&](const Matrix& x) { return info_nce_loss(a, x, 0.2, nodes).loss; };
    EXPECT_LT(relative_error(r.grad_first, numeric_gradient(fa, a)), 1e-4);
    EXPECT_LT(relative_error(r.grad_second, numeric_gradient(fb, b)), 1e-4);
  }
}

TEST(InfoNce, SubsetLeavesOtherRowsUntouched) {
  const Matrix a = random_matrix(6, 3, 1), b = random_matrix(6, 3, 2);
  const std::vector<Index> nodes = {1, 4};
  const auto r = info_nce_loss(a, b, 0.5, nodes);
  for (int row : {0, 2, 3, 5}) EXPECT_EQ(r.grad_first.row(row).norm(), 0.0);
}

TEST(Views, NoDropoutAndNoNoiseGiveIdenticalViews) {
  const auto g = toy_graph(5, 6, 1);
  const auto m = initialize_model(5, 6, small_config());
  auto op = std::make_shared<Propagator>(std::make_shared<NormalizedAdjacency>(normalized_adjacency(g)), 3);
  std::mt19937_64 rng(1);
  const Matrix prop = op->forward(m.base);
  AugmentationConfig drop{Augmentation::kEdgeDropout, 0.0, 0.1};
  auto v = make_views(m, g, op, drop, rng);
  EXPECT_EQ(v.first, prop);
  EXPECT_EQ(v.second, prop);
  AugmentationConfig quiet{Augmentation::kEmbeddingNoise, 0.1, 0.0};
  v = make_views(m, g, op, quiet, rng);
  EXPECT_EQ(v.first, v.second);
}

TEST(Views, DeterministicPerSeedAndNoiseMagnitude) {
  const auto g = toy_graph(5, 6, 1);
  const auto m = initialize_model(5, 6, small_config());
  auto op = std::make_shared<Propagator>(std::make_shared<NormalizedAdjacency>(normalized_adjacency(g)), 3);
  for (auto mode : {Augmentation::kEdgeDropout, Augmentation::kEmbeddingNoise}) {
    AugmentationConfig aug{mode, 0.3, 0.1};
    std::mt19937_64 r1(9), r2(9);
    const auto a = make_views(m, g, op, aug, r1);
    const auto b = make_views(m, g, op, aug, r2);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
    if (mode == Augmentation::kEmbeddingNoise) {
      for (Eigen::Index r = 0; r < a.first.rows(); ++r) {
        EXPECT_NEAR((a.second.row(r) - a.first.row(r)).norm(), 0.1, 1e-12);
      }
    }
  }
}

TEST(Views, FullDropoutRejected) {
  TrainConfig c = small_config();
  c.augmentation = {Augmentation::kEdgeDropout, 1.0, 0.1};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(JointStep, ZeroLearningRateLeavesModelUnchanged) {
  const auto g = toy_graph(8, 10, 2);
  TrainConfig c = small_config();
  c.learning_rate = 0.0;
  Trainer trainer(g, c);
  auto m = initialize_model(8, 10, c);
  const Matrix before = m.base;
  std::mt19937_64 rng(1);
  Optimizer opt(c);
  const auto batch = trainer.sample_epoch(rng);
  trainer.joint_step(m, batch, opt, rng);
  EXPECT_EQ(m.base, before);
}

TEST(JointStep, TotalGradientMatchesFiniteDifferences) {
  // With plain SGD at lr = 1 the step equals the gradient; compare with a
  // finite-difference gradient of the reported total loss (no augmentation noise).
  const auto g = toy_graph(5, 6, 3, 0.4);
  TrainConfig c = small_config();
  c.dim = 3;
  c.optimizer = OptimizerKind::kSgd;
  c.learning_rate = 1.0;
  c.augmentation = {Augmentation::kEmbeddingNoise, 0.1, 0.0};
  c.gcl_weight = 0.5;
  c.l2 = 0.01;
  Trainer trainer(g, c);
  std::mt19937_64 rng(4);
  const auto batch = trainer.sample_epoch(rng);
  auto m = initialize_model(5, 6, c);
  const Matrix start = m.base;
  Optimizer opt(c);
  trainer.joint_step(m, batch, opt, rng);
  const Matrix analytic = start - m.base;
  const auto f = [&](const Matrix& x) {
    EmbeddingModel probe = m;
    probe.base = x;
    TrainConfig frozen = c;
    frozen.learning_rate = 0.0;
    Optimizer none(frozen);
    std::mt19937_64 r(0);
    Trainer t(g, frozen);
    return t.joint_step(probe, batch, none, r).total;
  };
  EXPECT_LT(relative_error(analytic, numeric_gradient(f, start)), 1e-4);
}

TEST(Train, ZeroEpochsReturnsInitialization) {
  const auto g = toy_graph(6, 6, 4);
  TrainConfig c = small_config();
  c.epochs = 0;
  const auto r = train(g, c);
  EXPECT_EQ(r.model.base, initialize_model(6, 6, c).base);
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, BprLossDecreasesOnToyGraph) {
  const auto g = toy_graph(20, 15, 5);
  TrainConfig c = small_config();
  c.epochs = 50;
  c.gcl_weight = 0.0;
  const auto r = train(g, c);
  EXPECT_LT(r.log.back().rec, r.log.front().rec);
}

TEST(Train, DeterministicAndOmegaZeroMatchesBprOnly) {
  const auto g = toy_graph(10, 12, 6);
  TrainConfig c = small_config();
  const auto a = train(g, c);
  const auto b = train(g, c);
  EXPECT_EQ(a.model.base, b.model.base);
  for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(a.log[e].total, b.log[e].total);

  c.gcl_weight = 0.0;
  TrainConfig other = c;
  other.augmentation.mode = Augmentation::kEdgeDropout;  // irrelevant when the term is off
  EXPECT_EQ(train(g, c).model.base, train(g, other).model.base);
}

TEST(Train, AllEntriesFinite) {
  const auto g = toy_graph(10, 12, 7);
  TrainConfig c = small_config();
  c.epochs = 10;
  EXPECT_TRUE(train(g, c).model.base.allFinite());
}

TEST(Train, EarlyStoppingTracksBestEpoch) {
  auto g = split(generate_synthetic({60, 80, 0.8, 0.1, 0.5, 1, 4.0, 3}), {}, 1);
  TrainConfig c = small_config();
  c.epochs = 30;
  c.patience = 3;
  c.eval_k = 10;
  const auto r = train(g, c);
  EXPECT_GE(r.best_epoch, 1u);
  EXPECT_LE(r.log.size(), 30u);
  for (const auto& e : r.log) EXPECT_GE(e.val_recall, 0.0);
}

TEST(Checkpoint, RoundTripsExactly) {
  const auto g = toy_graph(5, 7, 8);
  TrainConfig c = small_config();
  c.temperature = 0.37;
  const auto r = train(g, c);
  const auto path = std::filesystem::temp_directory_path() / "gclrec_ckpt_test.json";
  save_checkpoint(r.model, c, path);
  TrainConfig back_config;
  const auto back = load_checkpoint(path, &back_config);
  EXPECT_EQ(back.base, r.model.base);
  EXPECT_EQ(back.layers, r.model.layers);
  EXPECT_EQ(back_config.temperature, 0.37);
  EXPECT_EQ(back_config.dim, c.dim);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "gclrec_bad_ckpt.json";
  std::ofstream(path) << "{\"format\":\"other\"}";
  EXPECT_THROW(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}

TEST(TrainingLog, CsvHeader) {
  const auto path = std::filesystem::temp_directory_path() / "gclrec_log_test.csv";
  write_training_log({{1, 0.5, 1.0, 0.0, 0.6, 0.1}}, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,L_rec,L_gcl,total,val_recall");
  std::filesystem::remove(path);
}
