#pragma once

#include <cstdint>

#include "gclrec/graph.hpp"

namespace gclrec {

// Desk-scale stand-in for a real interaction log: item popularity follows a
// discrete power law (weight ~ rank^-exponent over a shuffled catalogue) and
// user degrees are lognormal, rescaled to hit density * users * items edges.
// Users and items are also dealt round-robin into `communities` groups; an
// item's weight is multiplied by `affinity` for users of its own group, which
// gives the graph collaborative signal beyond raw popularity.
struct SyntheticSpec {
  std::size_t users = 500;
  std::size_t items = 800;
  double exponent = 0.8;
  double density = 0.03;
  double degree_sigma = 0.6;
  std::size_t communities = 8;
  double affinity = 8.0;
  std::uint64_t seed = 7;

  void validate() const;
};

// Edges are untagged (all training); run split() afterwards.
InteractionGraph generate_synthetic(const SyntheticSpec& spec);

}  // namespace gclrec
