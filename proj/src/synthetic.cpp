#include "gclrec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gclrec/error.hpp"

namespace gclrec {

void SyntheticSpec::validate() const {
  if (users < 10 || items < 10) throw ConfigError("synthetic graph needs at least 10 users and 10 items");
  if (!(exponent > 0.0)) throw ConfigError("power-law exponent must be positive");
  if (!(density > 0.0 && density <= 1.0)) throw ConfigError("density must be in (0, 1]");
  if (!(degree_sigma >= 0.0)) throw ConfigError("degree_sigma must be nonnegative");
  if (communities < 1) throw ConfigError("communities must be at least 1");
  if (!(affinity >= 1.0)) throw ConfigError("affinity must be at least 1");
}

InteractionGraph generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  // Popularity rank -> item index is a random permutation.
  std::vector<Index> by_rank(spec.items);
  std::iota(by_rank.begin(), by_rank.end(), Index{0});
  std::shuffle(by_rank.begin(), by_rank.end(), rng);
  std::vector<double> log_weight(spec.items);
  for (std::size_t r = 0; r < spec.items; ++r) {
    log_weight[by_rank[r]] = -spec.exponent * std::log(static_cast<double>(r + 1));
  }

  // Lognormal degrees scaled to the requested edge count (largest remainder).
  const double target_edges = std::round(spec.density * static_cast<double>(spec.users) *
                                         static_cast<double>(spec.items));
  std::lognormal_distribution<double> lognormal(0.0, spec.degree_sigma);
  std::vector<double> raw(spec.users);
  for (auto& w : raw) w = lognormal(rng);
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  std::vector<std::size_t> degree(spec.users);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t u = 0; u < spec.users; ++u) {
    const double share = target_edges * raw[u] / total;
    degree[u] = static_cast<std::size_t>(std::floor(share));
    assigned += degree[u];
    remainder.emplace_back(share - std::floor(share), u);
  }
  std::sort(remainder.begin(), remainder.end(),
            [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (std::size_t k = 0; assigned < static_cast<std::size_t>(target_edges) && k < remainder.size(); ++k, ++assigned) {
    ++degree[remainder[k].second];
  }
  for (auto& d : degree) d = std::clamp<std::size_t>(d, 1, spec.items);

  // Weighted sampling without replacement: keep the largest log(U)/w keys.
  std::vector<std::string> user_ids(spec.users);
  std::vector<std::string> item_ids(spec.items);
  for (std::size_t u = 0; u < spec.users; ++u) user_ids[u] = "u" + std::to_string(u);
  for (std::size_t i = 0; i < spec.items; ++i) item_ids[i] = "i" + std::to_string(i);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Interaction> edges;
  std::vector<std::pair<double, Index>> keys(spec.items);
  const double log_affinity = std::log(spec.affinity);
  for (std::size_t u = 0; u < spec.users; ++u) {
    const std::size_t group = u % spec.communities;
    for (std::size_t i = 0; i < spec.items; ++i) {
      double r = unit(rng);
      while (r == 0.0) r = unit(rng);
      const double w = log_weight[i] + (i % spec.communities == group ? log_affinity : 0.0);
      keys[i] = {std::log(std::log(1.0 / r)) - w, static_cast<Index>(i)};
    }
    // Smallest log(-log U) - log w  <=>  largest U^(1/w).
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(degree[u]), keys.end());
    for (std::size_t k = 0; k < degree[u]; ++k) {
      edges.push_back({static_cast<Index>(u), keys[k].second, Split::kTrain});
    }
  }
  return InteractionGraph(std::move(user_ids), std::move(item_ids), std::move(edges));
}

}  // namespace gclrec
