#include "gclrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gclrec/config_io.hpp"
#include "gclrec/error.hpp"
#include "gclrec/eval.hpp"

namespace gclrec {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
  if (dim == 0) throw ConfigError("dim must be positive");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(gcl_weight >= 0.0)) throw ConfigError("gcl_weight must be nonnegative");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be nonnegative");
  if (!(augmentation.dropout >= 0.0 && augmentation.dropout < 1.0)) {
    throw ConfigError("edge dropout must be in [0, 1)");
  }
  if (!(augmentation.noise >= 0.0)) throw ConfigError("embedding noise must be nonnegative");
  if (eval_k == 0) throw ConfigError("eval_k must be positive");
}

EmbeddingModel initialize_model(std::size_t num_users, std::size_t num_items,
                                const TrainConfig& config) {
  EmbeddingModel model;
  model.num_users = num_users;
  model.num_items = num_items;
  model.dim = config.dim;
  model.layers = config.layers;
  model.base.resize(static_cast<Eigen::Index>(num_users + num_items),
                    static_cast<Eigen::Index>(config.dim));
  std::mt19937_64 rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.dim));
  std::uniform_real_distribution<double> init(-bound, bound);
  for (Eigen::Index r = 0; r < model.base.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.base.cols(); ++c) model.base(r, c) = init(rng);
  }
  return model;
}

Propagator::Propagator(std::shared_ptr<const NormalizedAdjacency> adjacency, std::size_t layers)
    : adjacency_(std::move(adjacency)), layers_(layers) {
  if (!adjacency_) throw ConfigError("propagator needs an adjacency");
}

Matrix Propagator::forward(const Matrix& base) const {
  if (static_cast<std::size_t>(base.rows()) != adjacency_->dim()) {
    throw ConfigError("embedding rows (" + std::to_string(base.rows()) +
                      ") do not match adjacency dimension (" + std::to_string(adjacency_->dim()) + ")");
  }
  Matrix sum = base;
  Matrix layer = base;
  for (std::size_t l = 0; l < layers_; ++l) {
    layer = adjacency_->matrix * layer;
    sum += layer;
  }
  sum /= static_cast<double>(layers_ + 1);
  return sum;
}

Matrix propagate(const EmbeddingModel& model, const NormalizedAdjacency& adjacency) {
  Propagator op(std::shared_ptr<const NormalizedAdjacency>(&adjacency, [](const auto*) {}), model.layers);
  return op.forward(model.base);
}

namespace {

// log(sigmoid(x)) without overflow.
double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::shared_ptr<const NormalizedAdjacency> dropout_adjacency(
    const InteractionGraph& graph, double dropout, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - dropout);
  std::vector<std::pair<Index, Index>> kept;
  for (const auto& e : graph.edges()) {
    if (e.split == Split::kTrain && keep(rng)) kept.emplace_back(e.user, e.item);
  }
  if (kept.empty()) {
    auto adj = std::make_shared<NormalizedAdjacency>();
    adj->num_users = graph.num_users();
    adj->num_items = graph.num_items();
    adj->matrix.resize(static_cast<Eigen::Index>(adj->dim()), static_cast<Eigen::Index>(adj->dim()));
    adj->isolated_nodes = adj->dim();
    return adj;
  }
  return std::make_shared<NormalizedAdjacency>(
      normalized_adjacency(graph.num_users(), graph.num_items(), kept));
}

ContrastiveViews build_views(const Matrix& base, const Matrix* propagated,
                             const InteractionGraph& graph,
                             std::shared_ptr<const Propagator> propagator,
                             const AugmentationConfig& augmentation, std::mt19937_64& rng) {
  ContrastiveViews views;
  if (augmentation.mode == Augmentation::kEdgeDropout) {
    if (!(augmentation.dropout >= 0.0 && augmentation.dropout < 1.0)) {
      throw ConfigError("edge dropout must be in [0, 1)");
    }
    if (augmentation.dropout == 0.0) {
      views.first_op = propagator;
      views.second_op = propagator;
    } else {
      views.first_op = std::make_shared<Propagator>(
          dropout_adjacency(graph, augmentation.dropout, rng), propagator->layers());
      views.second_op = std::make_shared<Propagator>(
          dropout_adjacency(graph, augmentation.dropout, rng), propagator->layers());
    }
    views.first = propagated && views.first_op == propagator ? *propagated : views.first_op->forward(base);
    views.second = views.second_op == propagator && propagated ? *propagated : views.second_op->forward(base);
    return views;
  }

  if (!(augmentation.noise >= 0.0)) throw ConfigError("embedding noise must be nonnegative");
  views.first_op = propagator;
  views.second_op = propagator;
  views.first = propagated ? *propagated : propagator->forward(base);
  views.second = views.first;
  if (augmentation.noise > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vector noise(views.second.cols());
    for (Eigen::Index r = 0; r < views.second.rows(); ++r) {
      for (Eigen::Index c = 0; c < noise.size(); ++c) noise[c] = unit(rng);
      const double norm = noise.norm();
      if (norm > 0.0) noise /= norm;
      for (Eigen::Index c = 0; c < noise.size(); ++c) {
        const double z = views.first(r, c);
        const double sign = z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
        views.second(r, c) += augmentation.noise * sign * noise[c];
      }
    }
  }
  return views;
}

}  // namespace

LossGrad bpr_loss(const Matrix& embeddings, std::size_t num_users, std::span<const Triple> triples) {
  if (triples.empty()) throw ConfigError("bpr_loss needs at least one triple");
  LossGrad out;
  out.grad = Matrix::Zero(embeddings.rows(), embeddings.cols());
  const double inv_n = 1.0 / static_cast<double>(triples.size());
  for (const auto& t : triples) {
    const auto u = static_cast<Eigen::Index>(t.user);
    const auto i = static_cast<Eigen::Index>(num_users + t.pos);
    const auto j = static_cast<Eigen::Index>(num_users + t.neg);
    const double x = embeddings.row(u).dot(embeddings.row(i) - embeddings.row(j));
    out.loss -= log_sigmoid(x) * inv_n;
    // d(-log sigmoid(x))/dx = -sigmoid(-x)
    const double c = -sigmoid(-x) * inv_n;
    out.grad.row(u) += c * (embeddings.row(i) - embeddings.row(j));
    out.grad.row(i) += c * embeddings.row(u);
    out.grad.row(j) -= c * embeddings.row(u);
  }
  return out;
}

ContrastiveViews make_views(const EmbeddingModel& model, const InteractionGraph& graph,
                            std::shared_ptr<const Propagator> propagator,
                            const AugmentationConfig& augmentation, std::mt19937_64& rng) {
  return build_views(model.base, nullptr, graph, std::move(propagator), augmentation, rng);
}

InfoNceResult info_nce_loss(const Matrix& first, const Matrix& second, double temperature,
                            std::span<const Index> nodes) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (first.rows() != second.rows() || first.cols() != second.cols()) {
    throw ConfigError("contrastive views differ in shape");
  }
  InfoNceResult out;
  out.grad_first = Matrix::Zero(first.rows(), first.cols());
  out.grad_second = Matrix::Zero(second.rows(), second.cols());
  const auto n = static_cast<Eigen::Index>(nodes.size());
  if (n == 0) return out;

  Matrix a(n, first.cols());
  Matrix b(n, second.cols());
  Vector norm_a(n);
  Vector norm_b(n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto row = static_cast<Eigen::Index>(nodes[static_cast<std::size_t>(p)]);
    norm_a[p] = first.row(row).norm();
    norm_b[p] = second.row(row).norm();
    if (norm_a[p] == 0.0 || norm_b[p] == 0.0) {
      throw NumericalError("zero-norm embedding row for node " + std::to_string(row));
    }
    a.row(p) = first.row(row) / norm_a[p];
    b.row(p) = second.row(row) / norm_b[p];
  }

  Matrix logits = (a * b.transpose()) / temperature;
  Matrix softmax(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const double peak = logits.row(p).maxCoeff();
    softmax.row(p) = (logits.row(p).array() - peak).exp();
    const double z = softmax.row(p).sum();
    out.loss += peak + std::log(z) - logits(p, p);
    softmax.row(p) /= z;
  }
  // dL/dlogits = softmax - I
  softmax.diagonal().array() -= 1.0;
  const Matrix grad_a = softmax * b / temperature;
  const Matrix grad_b = softmax.transpose() * a / temperature;

  // Back through z -> z / |z|.
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto row = static_cast<Eigen::Index>(nodes[static_cast<std::size_t>(p)]);
    out.grad_first.row(row) += (grad_a.row(p) - a.row(p) * a.row(p).dot(grad_a.row(p))) / norm_a[p];
    out.grad_second.row(row) += (grad_b.row(p) - b.row(p) * b.row(p).dot(grad_b.row(p))) / norm_b[p];
  }
  return out;
}

Optimizer::Optimizer(const TrainConfig& config)
    : kind_(config.optimizer),
      lr_(config.learning_rate),
      beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      eps_(config.adam_epsilon) {}

void Optimizer::step(Matrix& params, const Matrix& grad) {
  if (kind_ == OptimizerKind::kSgd) {
    params -= lr_ * grad;
    return;
  }
  if (m_.rows() != params.rows() || m_.cols() != params.cols()) {
    m_ = Matrix::Zero(params.rows(), params.cols());
    v_ = Matrix::Zero(params.rows(), params.cols());
    t_ = 0;
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Trainer::Trainer(const InteractionGraph& graph, TrainConfig config)
    : graph_(graph), config_(std::move(config)), train_edges_(train_pairs(graph)) {
  config_.validate();
  if (train_edges_.empty()) throw ConfigError("training split is empty");
  propagator_ = std::make_shared<Propagator>(
      std::make_shared<NormalizedAdjacency>(normalized_adjacency(graph_)), config_.layers);
}

std::vector<Triple> Trainer::sample_epoch(std::mt19937_64& rng) const {
  const auto num_items = static_cast<Index>(graph_.num_items());
  const auto& train = graph_.items_by_user(Split::kTrain);
  std::uniform_int_distribution<Index> pick(0, num_items - 1);
  std::vector<Triple> triples;
  triples.reserve(train_edges_.size());
  for (const auto& [u, i] : train_edges_) {
    if (train[u].size() >= num_items) continue;  // no negative exists
    Index j = pick(rng);
    while (std::binary_search(train[u].begin(), train[u].end(), j)) j = pick(rng);
    triples.push_back({u, i, j});
  }
  std::shuffle(triples.begin(), triples.end(), rng);
  return triples;
}

StepLosses Trainer::joint_step(EmbeddingModel& model, std::span<const Triple> batch,
                               Optimizer& optimizer, std::mt19937_64& rng,
                               const ExtraLoss& extra) const {
  if (batch.empty()) throw ConfigError("empty batch");
  const Matrix propagated = propagator_->forward(model.base);
  auto bpr = bpr_loss(propagated, model.num_users, batch);
  Matrix grad_prop = std::move(bpr.grad);
  Matrix grad_base = Matrix::Zero(model.base.rows(), model.base.cols());

  StepLosses losses;
  losses.rec = bpr.loss;

  if (config_.gcl_weight > 0.0) {
    std::vector<Index> nodes;
    nodes.reserve(batch.size() * 2);
    for (const auto& t : batch) {
      nodes.push_back(t.user);
      nodes.push_back(static_cast<Index>(model.num_users + t.pos));
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    auto views = build_views(model.base, &propagated, graph_, propagator_, config_.augmentation, rng);
    auto nce = info_nce_loss(views.first, views.second, config_.temperature, nodes);
    const double reduce = config_.gcl_mean ? 1.0 / static_cast<double>(nodes.size()) : 1.0;
    losses.gcl = nce.loss * reduce;
    const double scale = config_.gcl_weight * reduce;
    if (views.first_op == propagator_) {
      grad_prop += scale * nce.grad_first;
    } else {
      grad_base += scale * views.first_op->backward(nce.grad_first);
    }
    if (views.second_op == propagator_) {
      grad_prop += scale * nce.grad_second;
    } else {
      grad_base += scale * views.second_op->backward(nce.grad_second);
    }
  }

  if (extra) losses.extra = extra(propagated, grad_prop);

  grad_base += propagator_->backward(grad_prop);

  if (config_.l2 > 0.0) {
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& t : batch) {
      for (auto row : {static_cast<Eigen::Index>(t.user),
                       static_cast<Eigen::Index>(model.num_users + t.pos),
                       static_cast<Eigen::Index>(model.num_users + t.neg)}) {
        losses.reg += config_.l2 * model.base.row(row).squaredNorm() * inv_n;
        grad_base.row(row) += 2.0 * config_.l2 * inv_n * model.base.row(row);
      }
    }
  }

  losses.total = losses.rec + config_.gcl_weight * losses.gcl + losses.reg + losses.extra;
  if (!std::isfinite(losses.total) || !grad_base.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite training loss: L_rec=" << losses.rec << " L_gcl=" << losses.gcl
        << " L_reg=" << losses.reg << " L_extra=" << losses.extra
        << " max|Z|=" << model.base.cwiseAbs().maxCoeff();
    throw NumericalError(msg.str());
  }
  optimizer.step(model.base, grad_base);
  return losses;
}

TrainResult train(const InteractionGraph& graph, const TrainConfig& config,
                  const EmbeddingModel* warm_start, const TrainHooks& hooks) {
  Trainer trainer(graph, config);
  TrainResult result;
  if (warm_start) {
    if (warm_start->num_users != graph.num_users() || warm_start->num_items != graph.num_items() ||
        warm_start->dim != config.dim || warm_start->layers != config.layers) {
      throw ConfigError("warm-start model does not match graph/config");
    }
    result.model = *warm_start;
  } else {
    result.model = initialize_model(graph.num_users(), graph.num_items(), config);
  }

  Optimizer optimizer(config);
  std::mt19937_64 sample_rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::mt19937_64 view_rng(config.seed * 0x9E3779B97F4A7C15ULL + 2);
  const bool validate = (config.patience > 0 || config.track_validation) &&
                        graph.count(Split::kValidation) > 0;
  double best = -1.0;
  std::size_t since_best = 0;
  EmbeddingModel best_model;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    ExtraLoss extra;
    if (hooks.before_epoch) extra = hooks.before_epoch(epoch, result.model);

    const auto triples = trainer.sample_epoch(sample_rng);
    EpochLog entry;
    entry.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < triples.size(); begin += config.batch_size) {
      const std::size_t end = std::min(triples.size(), begin + config.batch_size);
      const auto losses = trainer.joint_step(
          result.model, std::span<const Triple>(triples).subspan(begin, end - begin), optimizer,
          view_rng, extra);
      entry.rec += losses.rec;
      entry.gcl += losses.gcl;
      entry.extra += losses.extra;
      entry.total += losses.total;
      ++batches;
    }
    if (batches > 0) {
      entry.rec /= static_cast<double>(batches);
      entry.gcl /= static_cast<double>(batches);
      entry.extra /= static_cast<double>(batches);
      entry.total /= static_cast<double>(batches);
    }
    if (hooks.after_epoch) hooks.after_epoch(epoch, result.model);

    if (validate) {
      const Matrix propagated = trainer.propagator().forward(result.model.base);
      Ranker ranker(propagated, graph.num_users(), graph.num_items());
      entry.val_recall = recall_at_k(ranker, graph, config.eval_k, Split::kValidation);
      if (entry.val_recall > best) {
        best = entry.val_recall;
        since_best = 0;
        result.best_epoch = epoch + 1;
        if (config.patience > 0) best_model = result.model;
      } else {
        ++since_best;
      }
    }
    result.log.push_back(entry);
    if (config.patience > 0 && validate && since_best >= config.patience) break;
  }
  if (config.patience > 0 && best >= 0.0) result.model = std::move(best_model);
  return result;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  out.precision(17);
  out << "epoch,L_rec,L_gcl,total,val_recall\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.rec << ',' << e.gcl << ',' << e.total << ',' << e.val_recall << '\n';
  }
}

void save_checkpoint(const EmbeddingModel& model, const TrainConfig& config,
                     const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "gclrec-checkpoint";
  j["version"] = 1;
  j["num_users"] = model.num_users;
  j["num_items"] = model.num_items;
  j["dim"] = model.dim;
  j["layers"] = model.layers;
  j["config"] = config;
  std::vector<double> data(model.base.data(), model.base.data() + model.base.size());
  j["embeddings"] = std::move(data);
  std::ofstream(path) << j.dump() << '\n';
}

EmbeddingModel load_checkpoint(const std::filesystem::path& path, TrainConfig* config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "gclrec-checkpoint" || j.value("version", 0) != 1) {
    throw ParseError("unsupported checkpoint format");
  }
  EmbeddingModel model;
  model.num_users = j.at("num_users").get<std::size_t>();
  model.num_items = j.at("num_items").get<std::size_t>();
  model.dim = j.at("dim").get<std::size_t>();
  model.layers = j.at("layers").get<std::size_t>();
  const auto data = j.at("embeddings").get<std::vector<double>>();
  const auto rows = model.num_users + model.num_items;
  if (data.size() != rows * model.dim) throw ParseError("checkpoint embedding size mismatch");
  model.base = Eigen::Map<const Matrix>(data.data(), static_cast<Eigen::Index>(rows),
                                        static_cast<Eigen::Index>(model.dim));
  if (config) *config = j.at("config").get<TrainConfig>();
  return model;
}

}  // namespace gclrec
