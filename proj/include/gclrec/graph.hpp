#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

namespace gclrec {

using Index = std::uint32_t;

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

const char* split_name(Split s);

struct Interaction {
  Index user = 0;
  Index item = 0;
  Split split = Split::kTrain;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

// Bipartite user-item implicit-feedback graph. Users and items are densely
// indexed; the original string ids are kept for reporting. Users appended by
// an attack are marked as injected and are never counted as real users.
class InteractionGraph {
 public:
  InteractionGraph() = default;
  InteractionGraph(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                   std::vector<Interaction> edges, std::vector<bool> injected = {});

  std::size_t num_users() const { return user_ids_.size(); }
  std::size_t num_items() const { return item_ids_.size(); }
  std::size_t num_real_users() const;
  std::size_t num_nodes() const { return num_users() + num_items(); }

  const std::vector<Interaction>& edges() const { return edges_; }
  std::size_t count(Split s) const;

  const std::string& user_id(Index u) const { return user_ids_.at(u); }
  const std::string& item_id(Index i) const { return item_ids_.at(i); }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  bool is_injected(Index u) const { return injected_.at(u); }
  const std::vector<bool>& injected() const { return injected_; }

  // Sorted item lists per user for one split.
  const std::vector<std::vector<Index>>& items_by_user(Split s) const {
    return by_user_[static_cast<int>(s)];
  }
  bool has_edge(Index u, Index i, Split s) const;
  bool has_any_edge(Index u, Index i) const;

  // Training-edge count per item.
  std::vector<std::size_t> train_item_degrees() const;
  // Count of interactions per item over every split.
  std::vector<std::size_t> item_popularity() const;

  // Copy with extra users appended, each interacting (train split) with the
  // given items. The new users are flagged as injected.
  InteractionGraph with_injected_users(const std::vector<std::string>& ids,
                                       const std::vector<std::vector<Index>>& items) const;

  // Copy with every training edge touching a removed item dropped.
  InteractionGraph without_train_items(const std::vector<bool>& removed) const;

 private:
  void index();

  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::vector<Interaction> edges_;
  std::vector<bool> injected_;
  std::vector<std::vector<Index>> by_user_[3];
};

struct LoadResult {
  InteractionGraph graph;
  std::size_t dedup_count = 0;
  std::size_t comment_lines = 0;
};

// Reads "user<TAB>item[<TAB>ignored...]" lines. Lines starting with '#' and
// blank lines are skipped. All edges are tagged as training edges.
LoadResult load_interactions(const std::filesystem::path& path);
LoadResult parse_interactions(std::istream& in);

enum class SplitMode { kPerUser, kGlobal };

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

// Randomly partitions every edge into train/validation/test. Every user that
// has at least one edge ends with at least one training edge.
InteractionGraph split(const InteractionGraph& graph, SplitRatios ratios, std::uint64_t seed,
                       SplitMode mode = SplitMode::kPerUser);

// D^{-1/2} A D^{-1/2} of the bipartite adjacency built from training edges.
// Users occupy rows [0, num_users), items follow.
struct NormalizedAdjacency {
  Eigen::SparseMatrix<double> matrix;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t isolated_nodes = 0;

  std::size_t dim() const { return num_users + num_items; }
};

NormalizedAdjacency normalized_adjacency(const InteractionGraph& graph);
NormalizedAdjacency normalized_adjacency(std::size_t num_users, std::size_t num_items,
                                         std::span<const std::pair<Index, Index>> train_edges);

std::vector<std::pair<Index, Index>> train_pairs(const InteractionGraph& graph);

struct TargetSet {
  std::vector<Index> items;
  std::uint64_t seed = 0;
};

// Items sorted from most to least popular; ties by ascending item index.
std::vector<Index> popularity_ranking(const InteractionGraph& graph);

// The least popular `fraction` of items under popularity_ranking.
std::vector<Index> cold_item_pool(const InteractionGraph& graph, double fraction = 0.8);

TargetSet select_targets(const InteractionGraph& graph, std::size_t n_targets, std::uint64_t seed,
                         double cold_fraction = 0.8);

struct DegreeStats {
  double mean_train_degree = 0.0;
  std::vector<std::size_t> per_user;  // real users only, in index order
};

DegreeStats user_degree_stats(const InteractionGraph& graph);

// Snapshot layout: train.tsv, val.tsv, test.tsv (original ids), users.tsv and
// items.tsv (index, id[, injected]) and stats.json.
void write_snapshot(const InteractionGraph& graph, const std::filesystem::path& dir);
InteractionGraph read_snapshot(const std::filesystem::path& dir);

}  // namespace gclrec
