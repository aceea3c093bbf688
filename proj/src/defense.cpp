#include "gclrec/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gclrec/error.hpp"
#include "gclrec/spectral.hpp"

namespace gclrec {

void DefenseConfig::validate() const {
  if (rank < 1) throw ConfigError("detection rank must be at least 1");
  if (top_m < 1) throw ConfigError("top_m must be at least 1");
  if (!(lambda_mit >= 0.0)) throw ConfigError("lambda_mit must be nonnegative");
  if (!std::isfinite(gamma)) throw ConfigError("gamma must be finite");
}

DetectionResult threshold_errors(std::vector<double> epsilon, double gamma) {
  DetectionResult out;
  out.gamma = gamma;
  out.epsilon = std::move(epsilon);
  if (out.epsilon.empty()) return out;
  const double n = static_cast<double>(out.epsilon.size());
  out.mu = std::accumulate(out.epsilon.begin(), out.epsilon.end(), 0.0) / n;
  double var = 0.0;
  for (double e : out.epsilon) var += (e - out.mu) * (e - out.mu);
  out.s = std::sqrt(var / n);
  const double threshold = out.mu + gamma * out.s;
  for (std::size_t i = 0; i < out.epsilon.size(); ++i) {
    if (out.epsilon[i] >= threshold) out.flagged.push_back(static_cast<Index>(i));
  }
  return out;
}

DetectionResult detect_anomalies(const Matrix& items, std::size_t k, double gamma) {
  auto out = threshold_errors(reconstruction_errors(items, k), gamma);
  out.rank = k;
  return out;
}

MitigationMembership top_similar_users(const Matrix& items, const Matrix& users,
                                       std::span<const Index> flagged, std::size_t m) {
  if (m == 0) throw ConfigError("top_m must be at least 1");
  MitigationMembership out;
  if (flagged.empty()) return out;
  Matrix unit_users = users;
  for (Eigen::Index u = 0; u < unit_users.rows(); ++u) {
    const double n = unit_users.row(u).norm();
    if (n > 0.0) unit_users.row(u) /= n;
  }
  const std::size_t count = std::min(m, static_cast<std::size_t>(users.rows()));
  std::vector<Index> order(static_cast<std::size_t>(users.rows()));
  for (Index i : flagged) {
    const Vector cos = unit_users * items.row(static_cast<Eigen::Index>(i)).transpose();
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                      [&](Index a, Index b) {
                        if (cos[a] != cos[b]) return cos[a] > cos[b];
                        return a < b;
                      });
    out.items.push_back(i);
    out.users.emplace_back(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  }
  return out;
}

MitigationResult mitigation_loss(const Matrix& items, const Matrix& users,
                                 const MitigationMembership& membership) {
  MitigationResult out;
  out.grad_items = Matrix::Zero(items.rows(), items.cols());
  out.grad_users = Matrix::Zero(users.rows(), users.cols());
  std::size_t pairs = 0;
  for (const auto& list : membership.users) pairs += list.size();
  if (pairs == 0) return out;
  const double inv = 1.0 / static_cast<double>(pairs);

  for (std::size_t n = 0; n < membership.items.size(); ++n) {
    const auto i = static_cast<Eigen::Index>(membership.items[n]);
    const auto zi = items.row(i);
    const double norm_i = zi.norm();
    if (norm_i == 0.0) continue;
    for (Index u_index : membership.users[n]) {
      const auto u = static_cast<Eigen::Index>(u_index);
      const auto zu = users.row(u);
      const double norm_u = zu.norm();
      if (norm_u == 0.0) continue;
      const double cos = zi.dot(zu) / (norm_i * norm_u);
      out.loss += cos * inv;
      out.grad_items.row(i) += inv * (zu / (norm_i * norm_u) - cos * zi / (norm_i * norm_i));
      out.grad_users.row(u) += inv * (zi / (norm_i * norm_u) - cos * zu / (norm_u * norm_u));
    }
  }
  return out;
}

MitigationResult mitigation_loss(const Matrix& items, const Matrix& users,
                                 std::span<const Index> flagged, std::size_t m) {
  return mitigation_loss(items, users, top_similar_users(items, users, flagged, m));
}

namespace {

ExtraLoss make_mitigation_term(MitigationMembership membership, std::size_t num_users, double lambda) {
  if (membership.items.empty() || lambda == 0.0) return {};
  return [membership = std::move(membership), num_users, lambda](const Matrix& propagated,
                                                                 Matrix& grad) {
    const auto nu = static_cast<Eigen::Index>(num_users);
    const Matrix users = propagated.topRows(nu);
    const Matrix items = propagated.bottomRows(propagated.rows() - nu);
    const auto mit = mitigation_loss(items, users, membership);
    grad.topRows(nu) += lambda * mit.grad_users;
    grad.bottomRows(propagated.rows() - nu) += lambda * mit.grad_items;
    return lambda * mit.loss;
  };
}

}  // namespace

SimResult sim_train(const InteractionGraph& graph, const TrainConfig& train_config,
                    const DefenseConfig& config) {
  config.validate();
  train_config.validate();
  SimResult result;
  const auto nu = static_cast<Eigen::Index>(graph.num_users());

  if (config.variant == SimVariant::kNoSuppression) {
    auto plain = train(graph, train_config);
    const Matrix propagated = propagate(plain.model, normalized_adjacency(graph));
    auto detection = detect_anomalies(propagated.bottomRows(propagated.rows() - nu), config.rank, config.gamma);
    result.removed_items.assign(graph.num_items(), false);
    for (Index i : detection.flagged) result.removed_items[i] = true;
    result.history.push_back(std::move(detection));
    result.trained_on = graph.without_train_items(result.removed_items);
    result.training = train(result.trained_on, train_config);
    return result;
  }

  result.trained_on = graph;
  const Propagator op(std::make_shared<NormalizedAdjacency>(normalized_adjacency(graph)),
                      train_config.layers);

  std::vector<Index> fixed_candidates;
  if (config.variant == SimVariant::kNoDetection) {
    auto pool = cold_item_pool(graph);
    std::mt19937_64 rng(config.seed);
    const std::size_t count = std::min(config.random_candidates, pool.size());
    for (std::size_t k = 0; k < count; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    fixed_candidates.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(fixed_candidates.begin(), fixed_candidates.end());
    DetectionResult chosen;
    chosen.gamma = config.gamma;
    chosen.flagged = fixed_candidates;
    result.history.push_back(std::move(chosen));
  }

  MitigationMembership membership;
  TrainHooks hooks;
  hooks.before_epoch = [&](std::size_t epoch, const EmbeddingModel&) -> ExtraLoss {
    if (epoch == 0) return {};
    return make_mitigation_term(membership, graph.num_users(), config.lambda_mit);
  };
  hooks.after_epoch = [&](std::size_t, const EmbeddingModel& model) {
    const Matrix propagated = op.forward(model.base);
    const Matrix users = propagated.topRows(nu);
    const Matrix items = propagated.bottomRows(propagated.rows() - nu);
    std::vector<Index> candidates;
    if (config.variant == SimVariant::kFull) {
      auto detection = detect_anomalies(items, config.rank, config.gamma);
      candidates = detection.flagged;
      result.history.push_back(std::move(detection));
    } else {
      candidates = fixed_candidates;
    }
    membership = top_similar_users(items, users, candidates, config.top_m);
  };
  result.training = train(graph, train_config, nullptr, hooks);
  return result;
}

nlohmann::json detection_to_json(const DetectionResult& result, const InteractionGraph& graph) {
  nlohmann::json eps = nlohmann::json::object();
  for (std::size_t i = 0; i < result.epsilon.size(); ++i) {
    eps[graph.item_id(static_cast<Index>(i))] = result.epsilon[i];
  }
  std::vector<std::string> flagged;
  for (Index i : result.flagged) flagged.push_back(graph.item_id(i));
  return {{"rank", result.rank}, {"mu", result.mu},       {"s", result.s},
          {"gamma", result.gamma}, {"flagged", flagged}, {"epsilon", eps}};
}

}  // namespace gclrec
