#include "gclrec/pipeline.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gclrec/config_io.hpp"
#include "gclrec/error.hpp"
#include "gclrec/spectral.hpp"

namespace gclrec {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (dataset.empty()) synthetic.validate();
  const double sum = split.train + split.validation + split.test;
  if (!(split.train > 0.0) || split.validation < 0.0 || split.test <= 0.0 || std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be nonnegative, with train and test positive, and sum to 1");
  }
  if (num_targets == 0) throw ConfigError("num_targets must be at least 1");
  if (!(cold_fraction > 0.0 && cold_fraction <= 1.0)) throw ConfigError("cold_fraction must be in (0, 1]");
  if (attack != AttackMethod::kNone && !(attack_size > 0.0)) throw ConfigError("attack_size must be positive");
  if (k == 0) throw ConfigError("k must be at least 1");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  train.validate();
  if (defense) defense_config.validate();
}

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  InteractionGraph raw = config.dataset.empty() ? generate_synthetic(config.synthetic)
                                                : load_interactions(config.dataset).graph;
  InteractionGraph graph = split(raw, config.split, seed, config.split_mode);
  TargetSet targets = select_targets(graph, config.num_targets, seed, config.cold_fraction);
  return {std::move(graph), std::move(targets)};
}

namespace {

Matrix item_rows(const Matrix& propagated, std::size_t num_users) {
  const auto nu = static_cast<Eigen::Index>(num_users);
  return propagated.bottomRows(propagated.rows() - nu);
}

void write_stamp(const fs::path& path, const std::string& hash) {
  std::ofstream(path) << hash << '\n';
}

}  // namespace

SeedOutcome run_seed(const ExperimentConfig& config, std::uint64_t seed, const fs::path& dir) {
  const std::string hash = experiment_hash(config);
  const bool persist = !dir.empty();
  if (persist) fs::create_directories(dir);

  auto data = prepare_data(config, seed);
  const auto& graph = data.graph;
  const auto& targets = data.targets.items;
  TrainConfig tc = config.train;
  tc.seed = seed;

  if (persist) {
    write_snapshot(graph, dir / "graph");
    std::ofstream out(dir / "targets.txt");
    for (Index t : targets) out << graph.item_id(t) << '\n';
  }

  SeedOutcome outcome;
  auto record = [&](RunMetrics m) {
    m.config_hash = hash;
    outcome.runs.push_back(std::move(m));
  };

  const auto clean = train(graph, tc);
  const Matrix clean_prop = propagate(clean.model, normalized_adjacency(graph));
  record(evaluate_run(clean_prop, graph, targets, config.k, "clean", seed));
  if (persist) {
    save_checkpoint(clean.model, tc, dir / "clean_checkpoint.json");
    write_training_log(clean.log, dir / "clean_log.csv");
    write_spectrum_csv(spectrum_report(item_rows(clean_prop, graph.num_users())), dir / "clean_spectrum.csv");
  }
  if (config.attack == AttackMethod::kNone && !config.defense) return outcome;

  InteractionGraph poisoned = graph;
  std::string label = "none";
  if (config.attack != AttackMethod::kNone) {
    const auto budget = make_budget(graph, config.attack_size, targets.size());
    MaliciousProfileSet profiles;
    if (config.attack == AttackMethod::kRandom) {
      profiles = random_attack(graph, targets, budget, seed);
    } else {
      ClearConfig cc = config.clear;
      cc.seed = seed;
      profiles = clear_attack(graph, targets, budget, tc, cc);
    }
    poisoned = inject(graph, profiles);
    label = attack_method_name(config.attack);
    if (persist) write_profiles(profiles, graph, dir / "profiles.tsv", dir / "profiles.json");

    const auto victim = train(poisoned, tc);
    const Matrix victim_prop = propagate(victim.model, normalized_adjacency(poisoned));
    record(evaluate_run(victim_prop, poisoned, targets, config.k, label, seed));
    if (persist) {
      save_checkpoint(victim.model, tc, dir / "attacked_checkpoint.json");
      write_training_log(victim.log, dir / "attacked_log.csv");
      write_spectrum_csv(spectrum_report(item_rows(victim_prop, poisoned.num_users())),
                         dir / "attacked_spectrum.csv");
    }
  }

  if (config.defense) {
    DefenseConfig dc = config.defense_config;
    dc.seed = seed;
    const auto sim = sim_train(poisoned, tc, dc);
    const Matrix sim_prop = propagate(sim.training.model, normalized_adjacency(sim.trained_on));
    record(evaluate_run(sim_prop, poisoned, targets, config.k, label + "+SIM", seed, sim.removed_items));
    if (persist) {
      save_checkpoint(sim.training.model, tc, dir / "defended_checkpoint.json");
      write_training_log(sim.training.log, dir / "defended_log.csv");
      write_spectrum_csv(spectrum_report(item_rows(sim_prop, poisoned.num_users())),
                         dir / "defended_spectrum.csv");
      if (!sim.history.empty()) {
        std::ofstream(dir / "detection.json") << detection_to_json(sim.history.back(), poisoned).dump(2) << '\n';
        write_reconstruction_csv(sim.history.back().epsilon, poisoned.item_ids(), dir / "reconstruction.csv");
      }
    }
  }
  if (persist) write_stamp(dir / "CONFIG_HASH", hash);
  return outcome;
}

fs::path run_pipeline(const ExperimentConfig& config) {
  config.validate();
  const fs::path out(config.output_dir);
  fs::create_directories(out);
  const nlohmann::json cj = config;
  const std::string hash = experiment_hash(config);
  std::ofstream(out / "config.json") << cj.dump(2) << '\n';

  std::vector<RunMetrics> runs;
  std::uint64_t current = 0;
  try {
    for (std::uint64_t seed : config.seeds) {
      current = seed;
      auto outcome = run_seed(config, seed, out / ("seed_" + std::to_string(seed)));
      runs.insert(runs.end(), outcome.runs.begin(), outcome.runs.end());
    }
  } catch (const Error& e) {
    nlohmann::json err = {{"stage_seed", current},
                          {"error", e.what()},
                          {"exit_code", static_cast<int>(e.code())},
                          {"config_hash", hash},
                          {"completed_runs", runs.size()}};
    std::ofstream(out / "error.json") << err.dump(2) << '\n';
    throw;
  }

  write_report(build_report(runs), out);
  nlohmann::json manifest = {{"config_hash", hash},
                             {"seeds", config.seeds},
                             {"tool", "gclrec"},
                             {"version", "1.0.0"},
                             {"report_schema", MetricsTable::kSchemaVersion}};
  std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';
  return out;
}

}  // namespace gclrec
