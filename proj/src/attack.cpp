#include "gclrec/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "gclrec/error.hpp"
#include "gclrec/eval.hpp"

namespace gclrec {

AttackBudget make_budget(const InteractionGraph& graph, double attack_size, std::size_t num_targets) {
  if (!(attack_size > 0.0)) throw ConfigError("attack size must be positive");
  AttackBudget budget;
  budget.attack_size = attack_size;
  const double fake = attack_size * static_cast<double>(graph.num_real_users());
  budget.max_fake_users = static_cast<std::size_t>(std::ceil(fake - 1e-9));
  budget.per_user_quota =
      static_cast<std::size_t>(std::floor(user_degree_stats(graph).mean_train_degree + 1e-9));
  if (budget.per_user_quota < num_targets) {
    throw BudgetError("per-user quota " + std::to_string(budget.per_user_quota) +
                      " cannot hold " + std::to_string(num_targets) + " targets");
  }
  return budget;
}

const char* attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::kNone:
      return "none";
    case AttackMethod::kRandom:
      return "random";
    case AttackMethod::kClear:
      return "clear";
  }
  return "?";
}

AttackMethod parse_attack_method(const std::string& name) {
  if (name == "none") return AttackMethod::kNone;
  if (name == "random") return AttackMethod::kRandom;
  if (name == "clear") return AttackMethod::kClear;
  throw ConfigError("unknown attack method '" + name + "'");
}

void check_budget(const MaliciousProfileSet& profiles) {
  const auto& budget = profiles.budget;
  if (profiles.interactions.size() > budget.max_fake_users) {
    throw BudgetError(std::to_string(profiles.interactions.size()) + " fake users exceed the limit of " +
                      std::to_string(budget.max_fake_users));
  }
  if (profiles.fake_user_ids.size() != profiles.interactions.size()) {
    throw BudgetError("fake user ids and profiles differ in count");
  }
  for (std::size_t f = 0; f < profiles.interactions.size(); ++f) {
    const auto& items = profiles.interactions[f];
    if (items.size() > budget.per_user_quota) {
      throw BudgetError("profile " + profiles.fake_user_ids[f] + " exceeds the per-user quota");
    }
    std::vector<Index> sorted = items;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw BudgetError("profile " + profiles.fake_user_ids[f] + " repeats an item");
    }
    for (Index t : profiles.targets) {
      if (!std::binary_search(sorted.begin(), sorted.end(), t)) {
        throw BudgetError("profile " + profiles.fake_user_ids[f] + " misses a target");
      }
    }
  }
}

InteractionGraph inject(const InteractionGraph& graph, const MaliciousProfileSet& profiles) {
  return graph.with_injected_users(profiles.fake_user_ids, profiles.interactions);
}

MaliciousProfileSet targets_only_profiles(std::span<const Index> targets, const AttackBudget& budget,
                                          AttackMethod generator, std::uint64_t seed) {
  if (budget.per_user_quota < targets.size()) {
    throw BudgetError("per-user quota cannot hold every target");
  }
  MaliciousProfileSet out;
  out.generator = generator;
  out.targets.assign(targets.begin(), targets.end());
  out.budget = budget;
  out.seed = seed;
  for (std::size_t f = 0; f < budget.max_fake_users; ++f) {
    out.fake_user_ids.push_back("fake_" + std::to_string(f));
    out.interactions.emplace_back(targets.begin(), targets.end());
  }
  return out;
}

MaliciousProfileSet random_attack(const InteractionGraph& graph, std::span<const Index> targets,
                                  const AttackBudget& budget, std::uint64_t seed) {
  auto out = targets_only_profiles(targets, budget, AttackMethod::kRandom, seed);
  std::vector<bool> is_target(graph.num_items(), false);
  for (Index t : targets) is_target.at(t) = true;
  std::vector<Index> pool;
  for (Index i = 0; i < graph.num_items(); ++i) {
    if (!is_target[i]) pool.push_back(i);
  }
  const std::size_t filler = std::min(budget.per_user_quota - targets.size(), pool.size());
  std::mt19937_64 rng(seed);
  for (auto& profile : out.interactions) {
    for (std::size_t k = 0; k < filler; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      profile.push_back(pool[k]);
    }
  }
  check_budget(out);
  return out;
}

double promotion_margin(double x) { return x >= 0.0 ? x : std::expm1(x); }

double promotion_margin_derivative(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

PromotionContext build_promotion_context(const Matrix& embeddings, const InteractionGraph& graph,
                                         std::span<const Index> targets, std::size_t k) {
  Ranker ranker(embeddings, graph.num_users(), graph.num_items());
  std::vector<bool> is_target(graph.num_items(), false);
  for (Index t : targets) is_target.at(t) = true;
  const auto& train = graph.items_by_user(Split::kTrain);
  PromotionContext ctx;
  for (Index u = 0; u < graph.num_users(); ++u) {
    if (graph.is_injected(u)) continue;
    // k + |targets| entries always contain a non-target when one exists.
    auto ranked = ranker.top_k(u, k + targets.size(), train[u]);
    auto fallback = std::find_if(ranked.begin(), ranked.end(), [&](Index i) { return !is_target[i]; });
    if (fallback == ranked.end()) continue;  // user can only be shown targets
    ctx.users.push_back(u);
    ctx.fallback.push_back(*fallback);
    ranked.resize(std::min(ranked.size(), k));
    ctx.top_k.push_back(std::move(ranked));
  }
  return ctx;
}

LossGrad rank_promotion_loss(const Matrix& embeddings, std::size_t num_users,
                             std::span<const Index> targets, const PromotionContext& context,
                             const InteractionGraph& graph) {
  LossGrad out;
  out.grad = Matrix::Zero(embeddings.rows(), embeddings.cols());
  std::vector<bool> is_target(graph.num_items(), false);
  for (Index t : targets) is_target.at(t) = true;

  for (std::size_t n = 0; n < context.users.size(); ++n) {
    const Index u = context.users[n];
    const auto zu = embeddings.row(static_cast<Eigen::Index>(u));
    // Lowest-scored non-target inside the user's top-k list.
    Index lowest = context.fallback[n];
    double lowest_score = std::numeric_limits<double>::infinity();
    bool found = false;
    for (Index i : context.top_k[n]) {
      if (is_target[i]) continue;
      const double s = zu.dot(embeddings.row(static_cast<Eigen::Index>(num_users + i)));
      if (s < lowest_score || (s == lowest_score && i > lowest)) {
        lowest_score = s;
        lowest = i;
        found = true;
      }
    }
    const auto ref_row = static_cast<Eigen::Index>(num_users + lowest);
    if (!found) lowest_score = zu.dot(embeddings.row(ref_row));

    for (Index t : targets) {
      if (graph.has_edge(u, t, Split::kTrain)) continue;
      const auto t_row = static_cast<Eigen::Index>(num_users + t);
      const double x = zu.dot(embeddings.row(t_row)) - lowest_score;
      out.loss += promotion_margin(x);
      const double d = promotion_margin_derivative(x);
      out.grad.row(static_cast<Eigen::Index>(u)) += d * (embeddings.row(t_row) - embeddings.row(ref_row));
      out.grad.row(t_row) += d * zu;
      out.grad.row(ref_row) -= d * zu;
    }
  }
  return out;
}

AttackObjective attack_objective(const Matrix& embeddings, std::size_t num_users,
                                 std::span<const Index> targets, const PromotionContext& context,
                                 const InteractionGraph& graph, double alpha, std::uint64_t seed,
                                 const DispersionFn& dispersion) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
  AttackObjective out;
  auto disp = dispersion ? dispersion(embeddings, seed) : dispersion_loss(embeddings, seed);
  out.dispersion = disp.loss;
  out.grad = std::move(disp.grad);
  if (alpha > 0.0) {
    auto rank = rank_promotion_loss(embeddings, num_users, targets, context, graph);
    out.rank = rank.loss;
    out.grad += alpha * rank.grad;
  }
  out.loss = out.dispersion + alpha * out.rank;
  return out;
}

namespace {

// Top `count` non-target items by score for one fake user; ties by index.
std::vector<Index> nearest_items(const Matrix& embeddings, std::size_t num_items,
                                 Index fake_row, const std::vector<bool>& is_target, std::size_t count) {
  const Vector scores = embeddings.bottomRows(static_cast<Eigen::Index>(num_items)) *
                        embeddings.row(fake_row).transpose();
  std::vector<Index> candidates;
  for (Index i = 0; i < num_items; ++i) {
    if (!is_target[i]) candidates.push_back(i);
  }
  count = std::min(count, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count),
                    candidates.end(), [&](Index a, Index b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  candidates.resize(count);
  return candidates;
}

}  // namespace

MaliciousProfileSet clear_attack(const InteractionGraph& graph, std::span<const Index> targets,
                                 const AttackBudget& budget, const TrainConfig& train_config,
                                 const ClearConfig& config) {
  if (!(config.alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
  auto profiles = targets_only_profiles(targets, budget, AttackMethod::kClear, config.seed);
  profiles.alpha = config.alpha;
  const std::size_t filler = budget.per_user_quota - targets.size();
  if (config.outer_iterations == 0 || filler == 0 || profiles.interactions.empty()) {
    check_budget(profiles);
    return profiles;
  }

  std::vector<bool> is_target(graph.num_items(), false);
  for (Index t : targets) is_target.at(t) = true;

  TrainConfig inner = train_config;
  if (!config.inner_to_convergence) {
    inner.epochs = config.inner_epochs;
    inner.patience = 0;
    inner.track_validation = false;
  }

  EmbeddingModel model;
  bool have_model = false;
  for (std::size_t it = 0; it < config.outer_iterations; ++it) {
    const auto poisoned = inject(graph, profiles);
    try {
      auto trained = train(poisoned, inner, have_model ? &model : nullptr);
      model = std::move(trained.model);
      have_model = true;
    } catch (const NumericalError&) {
      // Keep the last stable set of profiles.
      break;
    }

    const Propagator op(std::make_shared<NormalizedAdjacency>(normalized_adjacency(poisoned)),
                        inner.layers);
    Matrix base = model.base;
    const auto first_fake = static_cast<Eigen::Index>(graph.num_users());
    const auto num_fake = static_cast<Eigen::Index>(profiles.interactions.size());
    const auto context = build_promotion_context(op.forward(base), poisoned, targets, config.rank_k);

    // Adam ascent on L_attack, restricted to the fake-user rows.
    Matrix m = Matrix::Zero(num_fake, base.cols());
    Matrix v = Matrix::Zero(num_fake, base.cols());
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    for (std::size_t step = 0; step < config.outer_steps; ++step) {
      const Matrix propagated = op.forward(base);
      const auto objective = attack_objective(
          propagated, poisoned.num_users(), targets, context, poisoned, config.alpha,
          config.seed * 1000003ULL + it * config.outer_steps + step,
          [&](const Matrix& z, std::uint64_t s) { return dispersion_loss(z, s, config.norm); });
      const Matrix grad = op.backward(objective.grad).middleRows(first_fake, num_fake);
      m = kBeta1 * m + (1.0 - kBeta1) * grad;
      v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseProduct(grad);
      const double t = static_cast<double>(step + 1);
      const double c1 = 1.0 - std::pow(kBeta1, t);
      const double c2 = 1.0 - std::pow(kBeta2, t);
      base.middleRows(first_fake, num_fake).array() +=
          config.outer_learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8);
    }

    const Matrix propagated = op.forward(base);
    std::vector<std::vector<Index>> next;
    for (Eigen::Index f = 0; f < num_fake; ++f) {
      std::vector<Index> items(targets.begin(), targets.end());
      const auto chosen = nearest_items(propagated, poisoned.num_items(),
                                        static_cast<Index>(first_fake + f), is_target, filler);
      items.insert(items.end(), chosen.begin(), chosen.end());
      next.push_back(std::move(items));
    }
    profiles.outer_iterations_run = it + 1;
    auto as_sets = [](std::vector<std::vector<Index>> lists) {
      for (auto& l : lists) std::sort(l.begin(), l.end());
      return lists;
    };
    const bool fixed_point = as_sets(next) == as_sets(profiles.interactions);
    profiles.interactions = std::move(next);
    if (fixed_point) break;
  }
  check_budget(profiles);
  return profiles;
}

void write_profiles(const MaliciousProfileSet& profiles, const InteractionGraph& graph,
                    const std::filesystem::path& tsv_path, const std::filesystem::path& manifest_path) {
  {
    std::ofstream out(tsv_path);
    for (std::size_t f = 0; f < profiles.interactions.size(); ++f) {
      for (Index i : profiles.interactions[f]) {
        out << profiles.fake_user_ids[f] << '\t' << graph.item_id(i) << '\n';
      }
    }
  }
  std::vector<std::string> target_ids;
  for (Index t : profiles.targets) target_ids.push_back(graph.item_id(t));
  nlohmann::json manifest = {
      {"generator", attack_method_name(profiles.generator)},
      {"seed", profiles.seed},
      {"alpha", profiles.alpha},
      {"targets", target_ids},
      {"num_fake_users", profiles.interactions.size()},
      {"outer_iterations_run", profiles.outer_iterations_run},
      {"budget",
       {{"attack_size", profiles.budget.attack_size},
        {"max_fake_users", profiles.budget.max_fake_users},
        {"per_user_quota", profiles.budget.per_user_quota}}},
  };
  std::ofstream(manifest_path) << manifest.dump(2) << '\n';
}

MaliciousProfileSet read_profiles(const std::filesystem::path& tsv_path, const InteractionGraph& graph) {
  std::ifstream in(tsv_path);
  if (!in) throw ConfigError("cannot open " + tsv_path.string());
  std::unordered_map<std::string, Index> item_index;
  for (Index i = 0; i < graph.num_items(); ++i) item_index.emplace(graph.item_id(i), i);
  MaliciousProfileSet out;
  std::unordered_map<std::string, std::size_t> fake_index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected fake_user<TAB>item", line_no);
    const std::string user = line.substr(0, tab);
    const auto item = item_index.find(line.substr(tab + 1));
    if (item == item_index.end()) throw ParseError("unknown item id", line_no);
    auto [it, inserted] = fake_index.try_emplace(user, out.fake_user_ids.size());
    if (inserted) {
      out.fake_user_ids.push_back(user);
      out.interactions.emplace_back();
    }
    out.interactions[it->second].push_back(item->second);
  }
  return out;
}

}  // namespace gclrec
