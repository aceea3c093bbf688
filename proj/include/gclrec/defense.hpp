#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "gclrec/graph.hpp"
#include "gclrec/linalg.hpp"
#include "gclrec/trainer.hpp"

namespace gclrec {

struct DetectionResult {
  std::vector<double> epsilon;
  double mu = 0.0;
  double s = 0.0;  // population standard deviation
  double gamma = 0.0;
  std::size_t rank = 0;
  std::vector<Index> flagged;  // ascending: every i with eps_i >= mu + gamma s
};

// Flags items whose error reaches mu + gamma * s.
DetectionResult threshold_errors(std::vector<double> epsilon, double gamma);

// Rank-k reconstruction errors of the item embeddings, then thresholding.
DetectionResult detect_anomalies(const Matrix& items, std::size_t k, double gamma);

// For each flagged item, its top-m users by cosine similarity (ties by
// ascending user index).
struct MitigationMembership {
  std::vector<Index> items;
  std::vector<std::vector<Index>> users;
};

MitigationMembership top_similar_users(const Matrix& items, const Matrix& users,
                                       std::span<const Index> flagged, std::size_t m);

struct MitigationResult {
  double loss = 0.0;  // mean cosine over (item, user) pairs
  Matrix grad_items;
  Matrix grad_users;
};

// Membership held fixed; only the cosine terms are differentiated.
MitigationResult mitigation_loss(const Matrix& items, const Matrix& users,
                                 const MitigationMembership& membership);
MitigationResult mitigation_loss(const Matrix& items, const Matrix& users,
                                 std::span<const Index> flagged, std::size_t m);

enum class SimVariant {
  kFull,             // detection + suppression
  kNoSuppression,    // detect once, hard-remove flagged items, retrain
  kNoDetection,      // suppression on random cold items
};

struct DefenseConfig {
  std::size_t rank = 32;
  double gamma = 1.0;
  std::size_t top_m = 50;
  double lambda_mit = 0.1;
  SimVariant variant = SimVariant::kFull;
  // Candidate set size for kNoDetection, drawn from the cold-item pool.
  std::size_t random_candidates = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimResult {
  TrainResult training;
  std::vector<DetectionResult> history;  // one per epoch (kFull), or the single detection
  std::vector<bool> removed_items;       // kNoSuppression only
  InteractionGraph trained_on;           // graph used for the final model
};

// Trains on L_rec + w L_gcl + lambda L_mit. Detection and top-m membership
// computed after epoch e-1 are held fixed throughout epoch e; epoch 0 has no
// mitigation term.
SimResult sim_train(const InteractionGraph& graph, const TrainConfig& train_config,
                    const DefenseConfig& defense_config);

nlohmann::json detection_to_json(const DetectionResult& result, const InteractionGraph& graph);

}  // namespace gclrec
