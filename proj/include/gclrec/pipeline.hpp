#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gclrec/attack.hpp"
#include "gclrec/defense.hpp"
#include "gclrec/eval.hpp"
#include "gclrec/graph.hpp"
#include "gclrec/synthetic.hpp"
#include "gclrec/trainer.hpp"

namespace gclrec {

struct ExperimentConfig {
  // Empty path selects the synthetic generator.
  std::string dataset;
  SyntheticSpec synthetic;
  SplitRatios split;
  SplitMode split_mode = SplitMode::kPerUser;
  std::size_t num_targets = 10;
  double cold_fraction = 0.8;
  TrainConfig train;
  AttackMethod attack = AttackMethod::kClear;
  double attack_size = 0.01;
  ClearConfig clear;
  bool defense = true;
  DefenseConfig defense_config;
  std::size_t k = 50;
  std::string output_dir = "gclrec_out";
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  void validate() const;
};

// Graph (split) and targets for one seed of an experiment.
struct PreparedData {
  InteractionGraph graph;
  TargetSet targets;
};

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

struct SeedOutcome {
  std::vector<RunMetrics> runs;  // clean, attacked, defended (as configured)
};

// Runs clean training, the configured attack and the defense for one seed,
// writing artifacts under `dir` when it is nonempty.
SeedOutcome run_seed(const ExperimentConfig& config, std::uint64_t seed,
                     const std::filesystem::path& dir = {});

// Full multi-seed pipeline; returns the output directory.
std::filesystem::path run_pipeline(const ExperimentConfig& config);

}  // namespace gclrec
