#include "gclrec/eval.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gclrec/error.hpp"

namespace gclrec {

Ranker::Ranker(const Matrix& embeddings, std::size_t num_users, std::size_t num_items)
    : embeddings_(embeddings), num_users_(num_users), num_items_(num_items) {
  if (static_cast<std::size_t>(embeddings.rows()) != num_users + num_items) {
    throw ConfigError("embedding rows do not match users + items");
  }
}

std::vector<Index> Ranker::top_k(Index user, std::size_t k, std::span<const Index> exclusions,
                                 bool* truncated) const {
  const auto items = embeddings_.bottomRows(static_cast<Eigen::Index>(num_items_));
  const Vector scores = items * embeddings_.row(user).transpose();

  std::vector<Index> candidates;
  candidates.reserve(num_items_);
  for (Index i = 0; i < num_items_; ++i) {
    if (!blocked_.empty() && blocked_[i]) continue;
    if (std::binary_search(exclusions.begin(), exclusions.end(), i)) continue;
    candidates.push_back(i);
  }
  auto better = [&](Index a, Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t n = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                    candidates.end(), better);
  candidates.resize(n);
  if (truncated) *truncated = n < k;
  return candidates;
}

double recall_at_k(const Ranker& ranker, const InteractionGraph& graph, std::size_t k,
                   Split held_out) {
  const auto& train = graph.items_by_user(Split::kTrain);
  const auto& truth = graph.items_by_user(held_out);
  double total = 0.0;
  std::size_t users = 0;
  for (Index u = 0; u < graph.num_users(); ++u) {
    if (truth[u].empty()) continue;
    const auto top = ranker.top_k(u, k, train[u]);
    std::size_t hits = 0;
    for (Index i : top) hits += std::binary_search(truth[u].begin(), truth[u].end(), i) ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(truth[u].size());
    ++users;
  }
  if (users == 0) throw ConfigError(std::string("no users with ") + split_name(held_out) + " items");
  return total / static_cast<double>(users);
}

HitRatio hit_ratio_at_k(const Ranker& ranker, const InteractionGraph& graph,
                        std::span<const Index> targets, std::size_t k) {
  if (targets.empty()) throw ConfigError("hit ratio needs at least one target");
  const auto& train = graph.items_by_user(Split::kTrain);
  HitRatio hr;
  hr.by_target.assign(targets.size(), 0.0);
  std::size_t any_hits = 0;
  for (Index u = 0; u < graph.num_users(); ++u) {
    if (graph.is_injected(u)) {
      ++hr.excluded_users;
      continue;
    }
    auto top = ranker.top_k(u, k, train[u]);
    std::sort(top.begin(), top.end());
    bool any = false;
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (std::binary_search(top.begin(), top.end(), targets[t])) {
        hr.by_target[t] += 1.0;
        any = true;
      }
    }
    any_hits += any ? 1 : 0;
    ++hr.users;
  }
  if (hr.users == 0) throw ConfigError("no real users to evaluate");
  const double n = static_cast<double>(hr.users);
  for (auto& h : hr.by_target) h /= n;
  hr.per_target = std::accumulate(hr.by_target.begin(), hr.by_target.end(), 0.0) /
                  static_cast<double>(targets.size());
  hr.any_target = static_cast<double>(any_hits) / n;
  return hr;
}

RunMetrics evaluate_run(const Matrix& embeddings, const InteractionGraph& graph,
                        std::span<const Index> targets, std::size_t k, std::string method,
                        std::uint64_t seed, const std::vector<bool>& blocked) {
  Ranker ranker(embeddings, graph.num_users(), graph.num_items());
  if (!blocked.empty()) ranker.block_items(blocked);
  RunMetrics m;
  m.method = std::move(method);
  m.seed = seed;
  m.k = k;
  m.recall = recall_at_k(ranker, graph, k);
  if (!targets.empty()) {
    const auto hr = hit_ratio_at_k(ranker, graph, targets, k);
    m.hit_ratio = hr.per_target;
    m.hit_ratio_any = hr.any_target;
    m.by_target = hr.by_target;
    m.excluded_users = hr.excluded_users;
  }
  return m;
}

MetricsTable build_report(std::span<const RunMetrics> runs) {
  if (runs.empty()) throw ConfigError("report needs at least one run");
  MetricsTable table;
  table.k = runs.front().k;
  for (const auto& run : runs) {
    auto it = std::find_if(table.rows.begin(), table.rows.end(),
                           [&](const ReportRow& r) { return r.method == run.method; });
    if (it == table.rows.end()) {
      table.rows.push_back({run.method, {}, 0.0, 0.0, 0.0});
      it = std::prev(table.rows.end());
    }
    it->runs.push_back(run);
  }
  for (auto& row : table.rows) {
    const double n = static_cast<double>(row.runs.size());
    for (const auto& r : row.runs) {
      row.mean_recall += r.recall / n;
      row.mean_hit_ratio += r.hit_ratio / n;
      row.mean_hit_ratio_any += r.hit_ratio_any / n;
    }
  }
  return table;
}

nlohmann::json report_to_json(const MetricsTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : row.runs) {
      runs.push_back({{"seed", r.seed},
                      {"recall", r.recall},
                      {"hit_ratio", r.hit_ratio},
                      {"hit_ratio_any", r.hit_ratio_any},
                      {"hit_ratio_by_target", r.by_target},
                      {"excluded_users", r.excluded_users},
                      {"config_hash", r.config_hash}});
    }
    rows.push_back({{"method", row.method},
                    {"mean_recall", row.mean_recall},
                    {"mean_hit_ratio", row.mean_hit_ratio},
                    {"mean_hit_ratio_any", row.mean_hit_ratio_any},
                    {"runs", runs}});
  }
  return {{"schema_version", MetricsTable::kSchemaVersion}, {"k", table.k}, {"rows", rows}};
}

namespace {

// Shortest text that reads back to the same double.
std::string num(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string report_to_csv(const MetricsTable& table) {
  std::size_t max_runs = 0;
  for (const auto& row : table.rows) max_runs = std::max(max_runs, row.runs.size());
  const auto k = std::to_string(table.k);
  std::ostringstream out;
  out << "method,runs,R@" << k << ",H@" << k << ",H@" << k << "_x1e-2";
  for (std::size_t s = 0; s < max_runs; ++s) {
    out << ",seed_" << s + 1 << ",R@" << k << "_" << s + 1 << ",H@" << k << "_" << s + 1;
  }
  out << '\n';
  for (const auto& row : table.rows) {
    out << row.method << ',' << row.runs.size() << ',' << num(row.mean_recall) << ','
        << num(row.mean_hit_ratio) << ',' << num(row.mean_hit_ratio * 100.0);
    for (std::size_t s = 0; s < max_runs; ++s) {
      if (s < row.runs.size()) {
        out << ',' << row.runs[s].seed << ',' << num(row.runs[s].recall) << ',' << num(row.runs[s].hit_ratio);
      } else {
        out << ",,,";
      }
    }
    out << '\n';
  }
  return out.str();
}

void write_report(const MetricsTable& table, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << report_to_json(table).dump(2) << '\n';
  std::ofstream(dir / "report.csv") << report_to_csv(table);
}

}  // namespace gclrec
