#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gclrec/graph.hpp"
#include "gclrec/linalg.hpp"

namespace gclrec {

// Scores z_u . z_i for all items given propagated embeddings (users first).
class Ranker {
 public:
  Ranker(const Matrix& embeddings, std::size_t num_users, std::size_t num_items);

  // Items never offered to anyone (e.g. removed by an ablation).
  void block_items(std::vector<bool> blocked) { blocked_ = std::move(blocked); }

  // Up to k items by descending score, ties by ascending index, skipping the
  // sorted `exclusions`. `truncated` is set when fewer than k were rankable.
  std::vector<Index> top_k(Index user, std::size_t k, std::span<const Index> exclusions,
                           bool* truncated = nullptr) const;

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }

 private:
  const Matrix& embeddings_;
  std::size_t num_users_;
  std::size_t num_items_;
  std::vector<bool> blocked_;
};

// Mean over users with a nonempty held-out set of |TopK(u) & P_u| / |P_u|.
// Training items are excluded from ranking.
double recall_at_k(const Ranker& ranker, const InteractionGraph& graph, std::size_t k,
                   Split held_out = Split::kTest);

struct HitRatio {
  double per_target = 0.0;  // mean over real users and targets of 1[t in TopK(u)]
  double any_target = 0.0;  // mean over real users of 1[some target in TopK(u)]
  std::vector<double> by_target;
  std::size_t users = 0;
  std::size_t excluded_users = 0;  // injected users left out of the average
};

HitRatio hit_ratio_at_k(const Ranker& ranker, const InteractionGraph& graph,
                        std::span<const Index> targets, std::size_t k);

struct RunMetrics {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t k = 50;
  double recall = 0.0;
  double hit_ratio = 0.0;
  double hit_ratio_any = 0.0;
  std::vector<double> by_target;
  std::size_t excluded_users = 0;
  std::string config_hash;
};

RunMetrics evaluate_run(const Matrix& embeddings, const InteractionGraph& graph,
                        std::span<const Index> targets, std::size_t k, std::string method,
                        std::uint64_t seed, const std::vector<bool>& blocked = {});

struct ReportRow {
  std::string method;
  std::vector<RunMetrics> runs;
  double mean_recall = 0.0;
  double mean_hit_ratio = 0.0;
  double mean_hit_ratio_any = 0.0;
};

struct MetricsTable {
  static constexpr int kSchemaVersion = 1;
  std::size_t k = 50;
  std::vector<ReportRow> rows;  // in order of first appearance
};

MetricsTable build_report(std::span<const RunMetrics> runs);
nlohmann::json report_to_json(const MetricsTable& table);
std::string report_to_csv(const MetricsTable& table);
void write_report(const MetricsTable& table, const std::filesystem::path& dir);

}  // namespace gclrec
