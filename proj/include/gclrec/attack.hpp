#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gclrec/graph.hpp"
#include "gclrec/linalg.hpp"
#include "gclrec/spectral.hpp"
#include "gclrec/trainer.hpp"

namespace gclrec {

struct AttackBudget {
  double attack_size = 0.01;
  std::size_t max_fake_users = 0;  // ceil(attack_size * real users)
  std::size_t per_user_quota = 0;  // floor(mean real-user training degree)
};

// Throws BudgetError when the quota cannot hold every target.
AttackBudget make_budget(const InteractionGraph& graph, double attack_size, std::size_t num_targets);

enum class AttackMethod { kNone, kRandom, kClear };
const char* attack_method_name(AttackMethod m);
AttackMethod parse_attack_method(const std::string& name);

struct MaliciousProfileSet {
  AttackMethod generator = AttackMethod::kNone;
  std::vector<std::string> fake_user_ids;
  std::vector<std::vector<Index>> interactions;  // targets first, then filler
  std::vector<Index> targets;
  AttackBudget budget;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  std::size_t outer_iterations_run = 0;
};

// Every profile holds all targets, no duplicates, at most quota items, and
// there are at most max_fake_users profiles. Throws BudgetError otherwise.
void check_budget(const MaliciousProfileSet& profiles);

InteractionGraph inject(const InteractionGraph& graph, const MaliciousProfileSet& profiles);

MaliciousProfileSet targets_only_profiles(std::span<const Index> targets, const AttackBudget& budget,
                                          AttackMethod generator, std::uint64_t seed);

// Targets plus uniformly drawn non-target filler up to the quota.
MaliciousProfileSet random_attack(const InteractionGraph& graph, std::span<const Index> targets,
                                  const AttackBudget& budget, std::uint64_t seed);

// g(x) = x for x >= 0, e^x - 1 otherwise.
double promotion_margin(double x);
double promotion_margin_derivative(double x);

// Per-user ranking snapshot used by the rank promotion loss. For each real
// user: the top-k list (training items excluded) and the best-ranked
// non-target item, used when every top-k entry is a target.
struct PromotionContext {
  std::vector<Index> users;
  std::vector<std::vector<Index>> top_k;
  std::vector<Index> fallback;
};

PromotionContext build_promotion_context(const Matrix& embeddings, const InteractionGraph& graph,
                                         std::span<const Index> targets, std::size_t k);

// L_R = sum_u sum_{t, (u,t) not a training edge} g(z_u.z_t - min_{i in TopK(u)\T} z_u.z_i).
// The gradient is w.r.t. `embeddings` (users first, then items) with the
// top-k lists held fixed.
LossGrad rank_promotion_loss(const Matrix& embeddings, std::size_t num_users,
                             std::span<const Index> targets, const PromotionContext& context,
                             const InteractionGraph& graph);

using DispersionFn = std::function<DispersionResult(const Matrix&, std::uint64_t)>;

struct AttackObjective {
  double loss = 0.0;  // L_D + alpha L_R
  double dispersion = 0.0;
  double rank = 0.0;
  Matrix grad;
};

// L_attack = L_D + alpha L_R on the full embedding matrix. `dispersion`
// defaults to spectral::dispersion_loss with the entrywise L1 norm.
AttackObjective attack_objective(const Matrix& embeddings, std::size_t num_users,
                                 std::span<const Index> targets, const PromotionContext& context,
                                 const InteractionGraph& graph, double alpha, std::uint64_t seed,
                                 const DispersionFn& dispersion = {});

struct ClearConfig {
  double alpha = 1.0;
  std::size_t outer_iterations = 10;
  std::size_t inner_epochs = 20;
  // Train each inner problem for the full train_config.epochs (with its early
  // stopping, if any) instead of inner_epochs.
  bool inner_to_convergence = false;
  // Outer loop: gradient ascent steps on L_attack over fake-user rows.
  std::size_t outer_steps = 30;
  double outer_learning_rate = 0.05;
  std::size_t rank_k = 50;
  DispersionNorm norm = DispersionNorm::kEntrywiseL1;
  std::uint64_t seed = 1;
};

// Bi-level targeted promotion attack: alternate inner retraining on the
// poisoned graph with outer ascent on L_attack over free fake-user
// embeddings, then snap each fake user to its nearest non-target items.
MaliciousProfileSet clear_attack(const InteractionGraph& graph, std::span<const Index> targets,
                                 const AttackBudget& budget, const TrainConfig& train_config,
                                 const ClearConfig& config);

// TSV rows "fake_user_id<TAB>item_id" plus a JSON manifest next to it.
void write_profiles(const MaliciousProfileSet& profiles, const InteractionGraph& graph,
                    const std::filesystem::path& tsv_path, const std::filesystem::path& manifest_path);
MaliciousProfileSet read_profiles(const std::filesystem::path& tsv_path, const InteractionGraph& graph);

}  // namespace gclrec
