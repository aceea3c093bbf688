#include "gclrec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "gclrec/error.hpp"

namespace gclrec {

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

namespace {

std::uint64_t pair_key(Index u, Index i) {
  return (static_cast<std::uint64_t>(u) << 32) | i;
}

}  // namespace

InteractionGraph::InteractionGraph(std::vector<std::string> user_ids,
                                   std::vector<std::string> item_ids,
                                   std::vector<Interaction> edges, std::vector<bool> injected)
    : user_ids_(std::move(user_ids)),
      item_ids_(std::move(item_ids)),
      edges_(std::move(edges)),
      injected_(std::move(injected)) {
  if (injected_.empty()) injected_.assign(user_ids_.size(), false);
  if (injected_.size() != user_ids_.size()) {
    throw ConfigError("injected flag count does not match user count");
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(edges_.size() * 2);
  for (const auto& e : edges_) {
    if (e.user >= user_ids_.size() || e.item >= item_ids_.size()) {
      throw ConfigError("edge (" + std::to_string(e.user) + ", " + std::to_string(e.item) +
                        ") out of range");
    }
    if (!seen.insert(pair_key(e.user, e.item)).second) {
      throw ConfigError("duplicate edge (" + std::to_string(e.user) + ", " +
                        std::to_string(e.item) + ")");
    }
  }
  index();
}

void InteractionGraph::index() {
  for (auto& lists : by_user_) lists.assign(user_ids_.size(), {});
  for (const auto& e : edges_) by_user_[static_cast<int>(e.split)][e.user].push_back(e.item);
  for (auto& lists : by_user_) {
    for (auto& items : lists) std::sort(items.begin(), items.end());
  }
}

std::size_t InteractionGraph::num_real_users() const {
  return static_cast<std::size_t>(std::count(injected_.begin(), injected_.end(), false));
}

std::size_t InteractionGraph::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [s](const Interaction& e) { return e.split == s; }));
}

bool InteractionGraph::has_edge(Index u, Index i, Split s) const {
  const auto& items = by_user_[static_cast<int>(s)].at(u);
  return std::binary_search(items.begin(), items.end(), i);
}

bool InteractionGraph::has_any_edge(Index u, Index i) const {
  return has_edge(u, i, Split::kTrain) || has_edge(u, i, Split::kValidation) ||
         has_edge(u, i, Split::kTest);
}

std::vector<std::size_t> InteractionGraph::train_item_degrees() const {
  std::vector<std::size_t> deg(num_items(), 0);
  for (const auto& e : edges_) {
    if (e.split == Split::kTrain) ++deg[e.item];
  }
  return deg;
}

std::vector<std::size_t> InteractionGraph::item_popularity() const {
  std::vector<std::size_t> pop(num_items(), 0);
  for (const auto& e : edges_) ++pop[e.item];
  return pop;
}

InteractionGraph InteractionGraph::with_injected_users(
    const std::vector<std::string>& ids, const std::vector<std::vector<Index>>& items) const {
  if (ids.size() != items.size()) throw ConfigError("injected id/profile count mismatch");
  auto users = user_ids_;
  auto flags = injected_;
  auto edges = edges_;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto u = static_cast<Index>(users.size());
    users.push_back(ids[k]);
    flags.push_back(true);
    for (Index i : items[k]) edges.push_back({u, i, Split::kTrain});
  }
  return InteractionGraph(std::move(users), item_ids_, std::move(edges), std::move(flags));
}

InteractionGraph InteractionGraph::without_train_items(const std::vector<bool>& removed) const {
  if (removed.size() != num_items()) throw ConfigError("removal mask size mismatch");
  std::vector<Interaction> kept;
  kept.reserve(edges_.size());
  for (const auto& e : edges_) {
    if (e.split == Split::kTrain && removed[e.item]) continue;
    kept.push_back(e);
  }
  return InteractionGraph(user_ids_, item_ids_, std::move(kept), injected_);
}

LoadResult parse_interactions(std::istream& in) {
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::unordered_map<std::string, Index> user_index;
  std::unordered_map<std::string, Index> item_index;
  std::unordered_set<std::uint64_t> seen;
  std::vector<Interaction> edges;
  LoadResult result;

  auto intern = [](const std::string& id, auto& table, auto& names) {
    auto [it, inserted] = table.try_emplace(id, static_cast<Index>(names.size()));
    if (inserted) names.push_back(id);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      ++result.comment_lines;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected user<TAB>item", line_no);
    const auto end = line.find('\t', tab + 1);
    std::string user = line.substr(0, tab);
    std::string item = line.substr(tab + 1, end == std::string::npos ? std::string::npos : end - tab - 1);
    if (user.empty() || item.empty()) throw ParseError("empty user or item id", line_no);

    const Index u = intern(user, user_index, users);
    const Index i = intern(item, item_index, items);
    if (!seen.insert(pair_key(u, i)).second) {
      ++result.dedup_count;
      continue;
    }
    edges.push_back({u, i, Split::kTrain});
  }
  if (edges.empty()) throw ParseError("no interactions in input");
  result.graph = InteractionGraph(std::move(users), std::move(items), std::move(edges));
  return result;
}

LoadResult load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse_interactions(in);
}

namespace {

// Counts per split for n edges, rounding validation and test to nearest.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& r) {
  const auto val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r.validation + 0.5));
  const auto test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r.test + 0.5));
  std::size_t train = n >= val + test ? n - val - test : 0;
  std::size_t v = std::min(val, n - train);
  std::size_t t = n - train - v;
  return {train, v, t};
}

}  // namespace

InteractionGraph split(const InteractionGraph& graph, SplitRatios ratios, std::uint64_t seed,
                       SplitMode mode) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<Interaction> edges = graph.edges();
  std::sort(edges.begin(), edges.end(), [](const Interaction& a, const Interaction& b) {
    return std::tie(a.user, a.item) < std::tie(b.user, b.item);
  });

  auto assign = [&](std::span<Interaction> group) {
    std::shuffle(group.begin(), group.end(), rng);
    const auto counts = split_counts(group.size(), ratios);
    for (std::size_t k = 0; k < group.size(); ++k) {
      group[k].split = k < counts[0] ? Split::kTrain
                       : k < counts[0] + counts[1] ? Split::kValidation
                                                   : Split::kTest;
    }
  };

  if (mode == SplitMode::kPerUser) {
    std::size_t begin = 0;
    while (begin < edges.size()) {
      std::size_t end = begin;
      while (end < edges.size() && edges[end].user == edges[begin].user) ++end;
      assign(std::span<Interaction>(edges).subspan(begin, end - begin));
      begin = end;
    }
  } else {
    assign(edges);
  }

  // Any user left without a training edge gets its first held-out edge back.
  std::vector<bool> has_train(graph.num_users(), false);
  for (const auto& e : edges) {
    if (e.split == Split::kTrain) has_train[e.user] = true;
  }
  std::vector<Interaction*> first_edge(graph.num_users(), nullptr);
  for (auto& e : edges) {
    if (!first_edge[e.user]) first_edge[e.user] = &e;
  }
  for (std::size_t u = 0; u < graph.num_users(); ++u) {
    if (!has_train[u] && first_edge[u]) first_edge[u]->split = Split::kTrain;
  }

  return InteractionGraph(graph.user_ids(), graph.item_ids(), std::move(edges), graph.injected());
}

std::vector<std::pair<Index, Index>> train_pairs(const InteractionGraph& graph) {
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(graph.count(Split::kTrain));
  for (const auto& e : graph.edges()) {
    if (e.split == Split::kTrain) pairs.emplace_back(e.user, e.item);
  }
  return pairs;
}

NormalizedAdjacency normalized_adjacency(std::size_t num_users, std::size_t num_items,
                                         std::span<const std::pair<Index, Index>> train_edges) {
  if (train_edges.empty()) throw ConfigError("training split is empty");
  const std::size_t n = num_users + num_items;
  std::vector<double> degree(n, 0.0);
  for (const auto& [u, i] : train_edges) {
    if (u >= num_users || i >= num_items) throw ConfigError("edge out of range");
    degree[u] += 1.0;
    degree[num_users + i] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(train_edges.size() * 2);
  for (const auto& [u, i] : train_edges) {
    const std::size_t c = num_users + i;
    const double w = 1.0 / std::sqrt(degree[u] * degree[c]);
    triplets.emplace_back(static_cast<int>(u), static_cast<int>(c), w);
    triplets.emplace_back(static_cast<int>(c), static_cast<int>(u), w);
  }
  NormalizedAdjacency adj;
  adj.num_users = num_users;
  adj.num_items = num_items;
  adj.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  adj.matrix.setFromTriplets(triplets.begin(), triplets.end());
  adj.matrix.makeCompressed();
  adj.isolated_nodes =
      static_cast<std::size_t>(std::count(degree.begin(), degree.end(), 0.0));
  return adj;
}

NormalizedAdjacency normalized_adjacency(const InteractionGraph& graph) {
  const auto pairs = train_pairs(graph);
  return normalized_adjacency(graph.num_users(), graph.num_items(), pairs);
}

std::vector<Index> popularity_ranking(const InteractionGraph& graph) {
  const auto pop = graph.item_popularity();
  std::vector<Index> order(graph.num_items());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return pop[a] > pop[b]; });
  return order;
}

std::vector<Index> cold_item_pool(const InteractionGraph& graph, double fraction) {
  if (fraction <= 0.0 || fraction > 1.0) throw ConfigError("cold fraction must be in (0, 1]");
  const auto ranking = popularity_ranking(graph);
  const auto pool_size =
      static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ranking.size()) + 1e-9));
  return {ranking.end() - static_cast<std::ptrdiff_t>(pool_size), ranking.end()};
}

TargetSet select_targets(const InteractionGraph& graph, std::size_t n_targets, std::uint64_t seed,
                         double cold_fraction) {
  auto pool = cold_item_pool(graph, cold_fraction);
  if (n_targets == 0) throw ConfigError("need at least one target");
  if (pool.size() < n_targets) {
    throw ConfigError("cold item pool has " + std::to_string(pool.size()) + " items, " +
                      std::to_string(n_targets) + " targets requested");
  }
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first n_targets slots are a uniform draw.
  for (std::size_t k = 0; k < n_targets; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(n_targets);
  return {std::move(pool), seed};
}

DegreeStats user_degree_stats(const InteractionGraph& graph) {
  DegreeStats stats;
  const auto& train = graph.items_by_user(Split::kTrain);
  std::size_t total = 0;
  for (std::size_t u = 0; u < graph.num_users(); ++u) {
    if (graph.is_injected(static_cast<Index>(u))) continue;
    stats.per_user.push_back(train[u].size());
    total += train[u].size();
  }
  if (total == 0) throw ConfigError("training split is empty");
  stats.mean_train_degree = static_cast<double>(total) / static_cast<double>(stats.per_user.size());
  return stats;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

}  // namespace

void write_snapshot(const InteractionGraph& graph, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream users(dir / "users.tsv");
    for (std::size_t u = 0; u < graph.num_users(); ++u) {
      users << u << '\t' << graph.user_id(static_cast<Index>(u)) << '\t'
            << (graph.is_injected(static_cast<Index>(u)) ? 1 : 0) << '\n';
    }
    std::ofstream items(dir / "items.tsv");
    for (std::size_t i = 0; i < graph.num_items(); ++i) {
      items << i << '\t' << graph.item_id(static_cast<Index>(i)) << '\n';
    }
  }
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    std::ofstream out(dir / (std::string(split_name(s)) + ".tsv"));
    for (const auto& e : graph.edges()) {
      if (e.split == s) out << graph.user_id(e.user) << '\t' << graph.item_id(e.item) << '\n';
    }
  }
  const double cells = static_cast<double>(graph.num_users()) * static_cast<double>(graph.num_items());
  nlohmann::json stats = {
      {"num_users", graph.num_users()},
      {"num_real_users", graph.num_real_users()},
      {"num_items", graph.num_items()},
      {"num_interactions", graph.edges().size()},
      {"num_train", graph.count(Split::kTrain)},
      {"num_validation", graph.count(Split::kValidation)},
      {"num_test", graph.count(Split::kTest)},
      {"density", cells > 0 ? static_cast<double>(graph.edges().size()) / cells : 0.0},
      {"mean_degree", graph.count(Split::kTrain) > 0 ? user_degree_stats(graph).mean_train_degree : 0.0},
  };
  std::ofstream(dir / "stats.json") << stats.dump(2) << '\n';
}

InteractionGraph read_snapshot(const std::filesystem::path& dir) {
  auto open = [&](const std::string& name) {
    std::ifstream in(dir / name);
    if (!in) throw ConfigError("snapshot file missing: " + (dir / name).string());
    return in;
  };
  std::vector<std::string> users;
  std::vector<bool> injected;
  std::unordered_map<std::string, Index> user_index;
  std::unordered_map<std::string, Index> item_index;
  std::vector<std::string> items;
  std::string line;
  std::size_t line_no = 0;
  {
    auto in = open("users.tsv");
    while (std::getline(in, line)) {
      ++line_no;
      auto f = split_tabs(line);
      if (f.size() < 2 || std::stoul(f[0]) != users.size()) throw ParseError("bad users.tsv row", line_no);
      user_index.emplace(f[1], static_cast<Index>(users.size()));
      users.push_back(f[1]);
      injected.push_back(f.size() > 2 && f[2] == "1");
    }
  }
  line_no = 0;
  {
    auto in = open("items.tsv");
    while (std::getline(in, line)) {
      ++line_no;
      auto f = split_tabs(line);
      if (f.size() < 2 || std::stoul(f[0]) != items.size()) throw ParseError("bad items.tsv row", line_no);
      item_index.emplace(f[1], static_cast<Index>(items.size()));
      items.push_back(f[1]);
    }
  }
  std::vector<Interaction> edges;
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    auto in = open(std::string(split_name(s)) + ".tsv");
    line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      auto f = split_tabs(line);
      if (f.size() < 2) throw ParseError("bad edge row in " + std::string(split_name(s)) + ".tsv", line_no);
      auto u = user_index.find(f[0]);
      auto i = item_index.find(f[1]);
      if (u == user_index.end() || i == item_index.end()) {
        throw ParseError("unknown id in " + std::string(split_name(s)) + ".tsv", line_no);
      }
      edges.push_back({u->second, i->second, s});
    }
  }
  return InteractionGraph(std::move(users), std::move(items), std::move(edges), std::move(injected));
}

}  // namespace gclrec
