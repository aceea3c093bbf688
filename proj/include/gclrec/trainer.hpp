#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gclrec/graph.hpp"
#include "gclrec/linalg.hpp"

namespace gclrec {

enum class Augmentation { kEdgeDropout, kEmbeddingNoise };
enum class OptimizerKind { kSgd, kAdam };

struct AugmentationConfig {
  Augmentation mode = Augmentation::kEmbeddingNoise;
  double dropout = 0.1;  // edge keep probability is 1 - dropout
  double noise = 0.1;    // magnitude of the per-row perturbation
};

struct TrainConfig {
  std::size_t batch_size = 512;
  double learning_rate = 0.001;
  std::size_t epochs = 100;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::size_t dim = 128;
  std::size_t layers = 3;
  double temperature = 0.2;
  double gcl_weight = 0.1;
  AugmentationConfig augmentation;
  double l2 = 1e-4;
  // Divide the contrastive sum by the number of contrasted nodes.
  bool gcl_mean = true;
  // Early stopping on validation Recall@eval_k; 0 disables it.
  std::size_t patience = 0;
  std::size_t eval_k = 50;
  // Compute validation recall every epoch even without early stopping.
  bool track_validation = false;

  void validate() const;
};

struct EmbeddingModel {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t dim = 0;
  std::size_t layers = 0;
  Matrix base;  // (num_users + num_items) x dim, users first

  auto users() const { return base.topRows(static_cast<Eigen::Index>(num_users)); }
  auto items() const { return base.bottomRows(static_cast<Eigen::Index>(num_items)); }
};

// Seeded uniform init in [-1/sqrt(d), 1/sqrt(d)].
EmbeddingModel initialize_model(std::size_t num_users, std::size_t num_items, const TrainConfig& config);

// Mean over l = 0..layers of A^l Z for a symmetric normalized adjacency A.
// The operator is symmetric, so backward() applies the same map.
class Propagator {
 public:
  Propagator(std::shared_ptr<const NormalizedAdjacency> adjacency, std::size_t layers);

  Matrix forward(const Matrix& base) const;
  Matrix backward(const Matrix& grad_out) const { return forward(grad_out); }

  std::size_t layers() const { return layers_; }
  const NormalizedAdjacency& adjacency() const { return *adjacency_; }

 private:
  std::shared_ptr<const NormalizedAdjacency> adjacency_;
  std::size_t layers_;
};

Matrix propagate(const EmbeddingModel& model, const NormalizedAdjacency& adjacency);

struct Triple {
  Index user = 0;
  Index pos = 0;
  Index neg = 0;
};

struct LossGrad {
  double loss = 0.0;
  Matrix grad;  // same shape as the input embeddings
};

// -mean log sigmoid(z_u.z_i - z_u.z_j) over the triples. Item indices are
// catalogue indices; item rows start at num_users. The gradient is w.r.t.
// the embeddings passed in.
LossGrad bpr_loss(const Matrix& embeddings, std::size_t num_users, std::span<const Triple> triples);

struct ContrastiveViews {
  Matrix first;
  Matrix second;
  // Operators mapping base embeddings to each view; used for backprop.
  std::shared_ptr<const Propagator> first_op;
  std::shared_ptr<const Propagator> second_op;
};

// Two augmented views of the propagated embeddings. Edge dropout subsamples
// the training edges twice; embedding noise perturbs the second view with
// eps * sign(z) * u/|u|, u ~ U(0,1)^d, per row.
ContrastiveViews make_views(const EmbeddingModel& model, const InteractionGraph& graph,
                            std::shared_ptr<const Propagator> propagator,
                            const AugmentationConfig& augmentation, std::mt19937_64& rng);

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad_first;
  Matrix grad_second;
};

// Sum over p in nodes of -log softmax_n(zbar'_p . zbar''_n / tau)[p], with
// rows normalized internally and negatives drawn from the same node subset.
InfoNceResult info_nce_loss(const Matrix& first, const Matrix& second, double temperature,
                            std::span<const Index> nodes);

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& config);
  void step(Matrix& params, const Matrix& grad);

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  Matrix m_, v_;
};

struct StepLosses {
  double rec = 0.0;
  double gcl = 0.0;
  double reg = 0.0;
  double extra = 0.0;
  double total = 0.0;
};

// Optional additional loss on the propagated embeddings. Returns the loss
// value (already weighted) and accumulates its gradient into `grad`.
using ExtraLoss = std::function<double(const Matrix& propagated, Matrix& grad)>;

class Trainer {
 public:
  Trainer(const InteractionGraph& graph, TrainConfig config);

  const TrainConfig& config() const { return config_; }
  const Propagator& propagator() const { return *propagator_; }
  std::shared_ptr<const Propagator> propagator_ptr() const { return propagator_; }

  // One optimizer step on L_rec + w L_gcl + L2 (+ extra). Reported losses are
  // the pre-step values.
  StepLosses joint_step(EmbeddingModel& model, std::span<const Triple> batch, Optimizer& optimizer,
                        std::mt19937_64& rng, const ExtraLoss& extra = {}) const;

  // Positive edges paired with uniformly drawn unobserved items, shuffled.
  std::vector<Triple> sample_epoch(std::mt19937_64& rng) const;

 private:
  const InteractionGraph& graph_;
  TrainConfig config_;
  std::shared_ptr<const Propagator> propagator_;
  std::vector<std::pair<Index, Index>> train_edges_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double rec = 0.0;
  double gcl = 0.0;
  double extra = 0.0;
  double total = 0.0;
  double val_recall = 0.0;
};

struct TrainHooks {
  // Called once per epoch before the first batch; may install the extra loss.
  std::function<ExtraLoss(std::size_t epoch, const EmbeddingModel& model)> before_epoch;
  std::function<void(std::size_t epoch, const EmbeddingModel& model)> after_epoch;
};

struct TrainResult {
  EmbeddingModel model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Runs `config.epochs` epochs of joint_step from a fresh seeded init, or
// continues from `warm_start` when given.
TrainResult train(const InteractionGraph& graph, const TrainConfig& config,
                  const EmbeddingModel* warm_start = nullptr, const TrainHooks& hooks = {});

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

void save_checkpoint(const EmbeddingModel& model, const TrainConfig& config,
                     const std::filesystem::path& path);
EmbeddingModel load_checkpoint(const std::filesystem::path& path, TrainConfig* config = nullptr);

}  // namespace gclrec
