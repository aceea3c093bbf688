#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "gclrec/error.hpp"
#include "gclrec/graph.hpp"

using namespace gclrec;

namespace {

InteractionGraph from_pairs(std::size_t users, std::size_t items,
                            const std::vector<std::pair<Index, Index>>& pairs) {
  std::vector<std::string> u, i;
  for (std::size_t k = 0; k < users; ++k) u.push_back("u" + std::to_string(k));
  for (std::size_t k = 0; k < items; ++k) i.push_back("i" + std::to_string(k));
  std::vector<Interaction> edges;
  for (auto [a, b] : pairs) edges.push_back({a, b, Split::kTrain});
  return InteractionGraph(u, i, edges);
}

LoadResult parse(const std::string& text) {
  std::istringstream in(text);
  return parse_interactions(in);
}

}  // namespace

TEST(Load, DuplicateLineIsCounted) {
  auto r = parse("a\tx\nb\ty\na\tx\n");
  EXPECT_EQ(r.graph.edges().size(), 2u);
  EXPECT_EQ(r.dedup_count, 1u);
}

TEST(Load, SingleInteraction) {
  auto r = parse("only\tone\n");
  EXPECT_EQ(r.graph.num_users(), 1u);
  EXPECT_EQ(r.graph.num_items(), 1u);
  EXPECT_EQ(r.graph.edges().size(), 1u);
}

TEST(Load, CommentsBlankLinesAndExtraColumns) {
  auto r = parse("# header\n\nu1\ti1\t5.0\r\nu2\ti1\n");
  EXPECT_EQ(r.comment_lines, 1u);
  EXPECT_EQ(r.graph.edges().size(), 2u);
  EXPECT_EQ(r.graph.item_id(0), "i1");
}

TEST(Load, MalformedLineReportsLineNumber) {
  try {
    parse("u\ti\nbroken line\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.code(), ExitCode::kConfig);
  }
}

TEST(Load, EmptyInputIsAnError) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(parse("# only a comment\n"), ParseError);
}

TEST(Load, MissingFile) {
  EXPECT_THROW(load_interactions("/nonexistent/file.tsv"), ConfigError);
}

TEST(Graph, RejectsOutOfRangeAndDuplicates) {
  EXPECT_THROW(from_pairs(1, 1, {{0, 1}}), ConfigError);
  EXPECT_THROW(from_pairs(1, 1, {{0, 0}, {0, 0}}), ConfigError);
}

TEST(Split, TenEdgesSplitSevenOneTwo) {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < 10; ++i) pairs.emplace_back(0, i);
  auto g = split(from_pairs(1, 10, pairs), {}, 1);
  EXPECT_EQ(g.count(Split::kTrain), 7u);
  EXPECT_EQ(g.count(Split::kValidation), 1u);
  EXPECT_EQ(g.count(Split::kTest), 2u);
}

TEST(Split, DeterministicAndPartition) {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index u = 0; u < 6; ++u)
    for (Index i = 0; i < 9; ++i)
      if ((u + i) % 2 == 0) pairs.emplace_back(u, i);
  const auto base = from_pairs(6, 9, pairs);
  for (auto mode : {SplitMode::kPerUser, SplitMode::kGlobal}) {
    const auto a = split(base, {}, 3, mode);
    const auto b = split(base, {}, 3, mode);
    EXPECT_EQ(a.edges(), b.edges());
    EXPECT_EQ(a.edges().size(), base.edges().size());
    std::set<std::pair<Index, Index>> seen;
    for (const auto& e : a.edges()) EXPECT_TRUE(seen.insert({e.user, e.item}).second);
    EXPECT_EQ(a.count(Split::kTrain) + a.count(Split::kValidation) + a.count(Split::kTest), pairs.size());
  }
}

TEST(Split, SingleEdgeUserKeepsItInTrain) {
  // User 0 has one edge, user 1 has three; every draw must keep u0's edge in train.
  const auto g0 = from_pairs(2, 4, {{0, 0}, {1, 1}, {1, 2}, {1, 3}});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto g = split(g0, {}, seed);
    EXPECT_TRUE(g.has_edge(0, 0, Split::kTrain));
    EXPECT_FALSE(g.items_by_user(Split::kTrain)[1].empty());
  }
}

TEST(Split, RejectsBadRatios) {
  const auto g = from_pairs(1, 1, {{0, 0}});
  EXPECT_THROW(split(g, {0.5, 0.1, 0.1}, 1), ConfigError);
  EXPECT_THROW(split(g, {1.0, 0.0, 0.0}, 1), ConfigError);
}

TEST(Adjacency, SingleEdgeEntriesAreOne) {
  const auto adj = normalized_adjacency(from_pairs(1, 1, {{0, 0}}));
  EXPECT_DOUBLE_EQ(adj.matrix.coeff(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(adj.matrix.coeff(1, 0), 1.0);
  EXPECT_EQ(adj.matrix.nonZeros(), 2);
}

TEST(Adjacency, StarEntriesAreInverseSqrtTwo) {
  const auto adj = normalized_adjacency(from_pairs(1, 2, {{0, 0}, {0, 1}}));
  EXPECT_NEAR(adj.matrix.coeff(0, 1), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(adj.matrix.coeff(0, 2), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Adjacency, EmptyTrainingSplitIsAnError) {
  std::vector<Interaction> edges = {{0, 0, Split::kTest}};
  InteractionGraph g({"u"}, {"i"}, edges);
  EXPECT_THROW(normalized_adjacency(g), ConfigError);
}

TEST(Adjacency, SymmetricZeroDiagonalRowSums) {
  const auto g = from_pairs(3, 4, {{0, 0}, {0, 1}, {1, 1}, {2, 1}, {2, 2}});
  const auto adj = normalized_adjacency(g);
  const Eigen::MatrixXd a(adj.matrix);
  EXPECT_TRUE(a.isApprox(a.transpose()));
  EXPECT_EQ(adj.isolated_nodes, 1u);  // item 3
  std::vector<double> deg(7, 0.0);
  for (auto [u, i] : train_pairs(g)) {
    deg[u] += 1;
    deg[3 + i] += 1;
  }
  for (int r = 0; r < 7; ++r) {
    EXPECT_EQ(a(r, r), 0.0);
    double expect = 0.0;
    for (int c = 0; c < 7; ++c)
      if (a(r, c) != 0.0) expect += 1.0 / std::sqrt(deg[r] * deg[c]);
    EXPECT_NEAR(a.row(r).sum(), expect, 1e-14);
  }
}

TEST(Targets, EqualPopularityUsesIndexTieBreak) {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < 10; ++i) pairs.emplace_back(0, i);
  const auto g = from_pairs(1, 10, pairs);
  const auto pool = cold_item_pool(g);
  EXPECT_EQ(pool, (std::vector<Index>{2, 3, 4, 5, 6, 7, 8, 9}));
  auto all = select_targets(g, 8, 5).items;
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, pool);
}

TEST(Targets, DeterministicAndDrawnFromPool) {
  // Item i is interacted with by i+1 users: distinct popularity counts.
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < 100; ++i)
    for (Index u = 0; u <= i; ++u) pairs.emplace_back(u, i);
  const auto g = from_pairs(100, 100, pairs);
  const auto a = select_targets(g, 10, 7);
  const auto b = select_targets(g, 10, 7);
  EXPECT_EQ(a.items, b.items);
  for (Index t : a.items) EXPECT_LT(t, 80u);
  EXPECT_THROW(select_targets(g, 81, 7), ConfigError);
}

TEST(DegreeStats, Mean) {
  EXPECT_DOUBLE_EQ(user_degree_stats(from_pairs(2, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 2}, {1, 3}}))
                       .mean_train_degree,
                   3.0);
  EXPECT_DOUBLE_EQ(user_degree_stats(from_pairs(1, 3, {{0, 0}, {0, 2}})).mean_train_degree, 2.0);
}

TEST(DegreeStats, MatchesRecount) {
  std::vector<std::pair<Index, Index>> pairs = {{0, 0}, {1, 0}, {1, 1}, {2, 2}, {3, 0}, {3, 1}, {3, 2}, {4, 3}};
  const auto s = user_degree_stats(from_pairs(5, 4, pairs));
  std::vector<std::size_t> count(5, 0);
  for (auto [u, i] : pairs) ++count[u];
  EXPECT_EQ(s.per_user, count);
  EXPECT_DOUBLE_EQ(s.mean_train_degree, 8.0 / 5.0);
}

TEST(DegreeStats, InjectedUsersIgnored) {
  const auto g = from_pairs(2, 3, {{0, 0}, {1, 1}}).with_injected_users({"f"}, {{0, 1, 2}});
  EXPECT_EQ(g.num_real_users(), 2u);
  EXPECT_DOUBLE_EQ(user_degree_stats(g).mean_train_degree, 1.0);
}

TEST(Snapshot, RoundTrip) {
  std::vector<std::pair<Index, Index>> pairs;
  for (Index u = 0; u < 5; ++u)
    for (Index i = 0; i < 6; ++i)
      if ((u * 7 + i) % 3 != 0) pairs.emplace_back(u, i);
  const auto g = split(from_pairs(5, 6, pairs), {}, 2).with_injected_users({"fake"}, {{1, 2}});
  const auto dir = std::filesystem::temp_directory_path() / "gclrec_snapshot_test";
  std::filesystem::remove_all(dir);
  write_snapshot(g, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "stats.json"));
  const auto back = read_snapshot(dir);
  EXPECT_EQ(back.user_ids(), g.user_ids());
  EXPECT_EQ(back.item_ids(), g.item_ids());
  EXPECT_EQ(back.injected(), g.injected());
  auto sorted = [](std::vector<Interaction> e) {
    std::sort(e.begin(), e.end(), [](auto& a, auto& b) { return std::tie(a.user, a.item) < std::tie(b.user, b.item); });
    return e;
  };
  EXPECT_EQ(sorted(back.edges()), sorted(g.edges()));
  std::filesystem::remove_all(dir);
}

TEST(Graph, WithoutTrainItemsDropsOnlyTrainingEdges) {
  std::vector<Interaction> edges = {{0, 0, Split::kTrain}, {0, 1, Split::kTrain}, {1, 0, Split::kTest}};
  InteractionGraph g({"a", "b"}, {"x", "y"}, edges);
  const auto h = g.without_train_items({true, false});
  EXPECT_FALSE(h.has_edge(0, 0, Split::kTrain));
  EXPECT_TRUE(h.has_edge(1, 0, Split::kTest));
  EXPECT_TRUE(h.has_edge(0, 1, Split::kTrain));
}
