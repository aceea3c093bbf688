// Command line entry point: one subcommand per pipeline stage.
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "gclrec/attack.hpp"
#include "gclrec/config_io.hpp"
#include "gclrec/defense.hpp"
#include "gclrec/error.hpp"
#include "gclrec/eval.hpp"
#include "gclrec/graph.hpp"
#include "gclrec/pipeline.hpp"
#include "gclrec/spectral.hpp"
#include "gclrec/synthetic.hpp"
#include "gclrec/trainer.hpp"

namespace fs = std::filesystem;
using namespace gclrec;
using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Training options shared by train, attack and defend.
struct TrainFlags {
  std::string config;
  std::optional<std::size_t> epochs, dim, layers, batch;
  std::optional<double> lr, gcl_weight, temperature, l2;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--train-config", config, "JSON file with training settings");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--dim", dim, "Embedding dimension");
    app->add_option("--layers", layers, "Propagation layers");
    app->add_option("--batch-size", batch, "Mini-batch size");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--gcl-weight", gcl_weight, "Contrastive loss weight (omega)");
    app->add_option("--temperature", temperature, "InfoNCE temperature");
    app->add_option("--l2", l2, "L2 regularization weight");
    app->add_option("--seed", seed, "Random seed");
  }

  TrainConfig build() const {
    TrainConfig c;
    if (!config.empty()) c = read_json(config).get<TrainConfig>();
    if (epochs) c.epochs = *epochs;
    if (dim) c.dim = *dim;
    if (layers) c.layers = *layers;
    if (batch) c.batch_size = *batch;
    if (lr) c.learning_rate = *lr;
    if (gcl_weight) c.gcl_weight = *gcl_weight;
    if (temperature) c.temperature = *temperature;
    if (l2) c.l2 = *l2;
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

std::vector<Index> read_targets(const std::string& path, const InteractionGraph& graph) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open targets file " + path);
  std::unordered_map<std::string, Index> index;
  for (Index i = 0; i < graph.num_items(); ++i) index.emplace(graph.item_id(i), i);
  std::vector<Index> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto it = index.find(line);
    if (it == index.end()) throw ParseError("unknown target item '" + line + "'", n);
    out.push_back(it->second);
  }
  if (out.empty()) throw ConfigError("targets file is empty");
  return out;
}

void write_targets(const std::vector<Index>& targets, const InteractionGraph& graph, const fs::path& path) {
  std::ofstream out(path);
  for (Index t : targets) out << graph.item_id(t) << '\n';
}

Matrix item_rows(const Matrix& propagated, std::size_t num_users) {
  return propagated.bottomRows(propagated.rows() - static_cast<Eigen::Index>(num_users));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph contrastive recommender workbench: train, attack, defend, evaluate"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load a TSV log, split it and write a graph snapshot");
  std::string in_path, out_dir;
  std::uint64_t split_seed = 1;
  std::string split_mode = "per_user";
  ingest->add_option("--input", in_path, "user<TAB>item TSV")->required();
  ingest->add_option("--out", out_dir, "Snapshot directory")->required();
  ingest->add_option("--seed", split_seed, "Split seed");
  ingest->add_option("--split-mode", split_mode, "per_user or global")
      ->check(CLI::IsMember({"per_user", "global"}));

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic power-law interaction log");
  SyntheticSpec spec;
  std::string synth_out;
  synth->add_option("--users", spec.users, "Number of users");
  synth->add_option("--items", spec.items, "Number of items");
  synth->add_option("--exponent", spec.exponent, "Popularity power-law exponent");
  synth->add_option("--density", spec.density, "Edge density");
  synth->add_option("--communities", spec.communities, "Latent user/item groups");
  synth->add_option("--affinity", spec.affinity, "In-group weight multiplier");
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output TSV")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a snapshot");
  std::string snapshot, checkpoint, log_path;
  TrainFlags train_flags;
  train_cmd->add_option("--snapshot", snapshot, "Snapshot directory")->required();
  train_cmd->add_option("--out", checkpoint, "Checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "Training log CSV");
  train_flags.add(train_cmd);

  // spectrum
  auto* spectrum_cmd = app.add_subcommand("spectrum", "Singular values and reconstruction errors of item embeddings");
  std::string spectrum_out, recon_out;
  std::size_t recon_rank = 32;
  spectrum_cmd->add_option("--snapshot", snapshot, "Snapshot directory")->required();
  spectrum_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  spectrum_cmd->add_option("--out", spectrum_out, "Spectrum CSV")->required();
  spectrum_cmd->add_option("--reconstruction", recon_out, "Reconstruction-error CSV");
  spectrum_cmd->add_option("--rank", recon_rank, "Subspace rank for reconstruction errors");

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Generate malicious profiles");
  std::string method = "clear", targets_path, attack_out;
  double attack_size = 0.01;
  std::size_t num_targets = 10;
  ClearConfig clear;
  TrainFlags attack_train;
  attack_cmd->add_option("--snapshot", snapshot, "Snapshot directory")->required();
  attack_cmd->add_option("--method", method, "random or clear")->check(CLI::IsMember({"random", "clear"}));
  attack_cmd->add_option("--attack-size", attack_size, "Fake users as a fraction of real users");
  attack_cmd->add_option("--targets", targets_path, "Target item ids, one per line (drawn when absent)");
  attack_cmd->add_option("--num-targets", num_targets, "Targets to draw when --targets is absent");
  attack_cmd->add_option("--alpha", clear.alpha, "Rank promotion weight");
  attack_cmd->add_option("--outer-iterations", clear.outer_iterations, "Outer iterations");
  attack_cmd->add_option("--inner-epochs", clear.inner_epochs, "Inner training epochs per iteration");
  attack_cmd->add_flag("--inner-to-convergence", clear.inner_to_convergence,
                       "Run each inner problem for the full training schedule");
  attack_cmd->add_option("--out", attack_out, "Output directory")->required();
  attack_train.add(attack_cmd);

  // defend
  auto* defend_cmd = app.add_subcommand("defend", "Train with spectral-irregularity mitigation");
  std::string profiles_path, defend_out;
  DefenseConfig defense;
  bool ablate_suppression = false, ablate_detection = false;
  TrainFlags defend_train;
  defend_cmd->add_option("--snapshot", snapshot, "Snapshot directory")->required();
  defend_cmd->add_option("--profiles", profiles_path, "Malicious profile TSV to inject first");
  defend_cmd->add_option("--gamma", defense.gamma, "Threshold multiplier");
  defend_cmd->add_option("--lambda-mit", defense.lambda_mit, "Mitigation weight");
  defend_cmd->add_option("--rank", defense.rank, "Detection rank");
  defend_cmd->add_option("--top-m", defense.top_m, "Users suppressed per flagged item");
  defend_cmd->add_option("--random-candidates", defense.random_candidates, "Candidates for --ablate-detection");
  auto* as_flag = defend_cmd->add_flag("--ablate-suppression", ablate_suppression, "Detect once and remove flagged items");
  defend_cmd->add_flag("--ablate-detection", ablate_detection, "Suppress random cold items")->excludes(as_flag);
  defend_cmd->add_option("--out", defend_out, "Output directory")->required();
  defend_train.add(defend_cmd);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Recall@k and HitRatio@k of a checkpoint");
  std::size_t k = 50;
  std::string eval_profiles, eval_out;
  eval_cmd->add_option("--snapshot", snapshot, "Snapshot directory")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--targets", targets_path, "Target item ids");
  eval_cmd->add_option("--profiles", eval_profiles, "Profiles the checkpoint was trained with");
  eval_cmd->add_option("--k", k, "Cutoff");
  eval_cmd->add_option("--out", eval_out, "Write metrics JSON here instead of stdout");

  // pipeline
  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run the full multi-seed experiment");
  std::string config_path;
  pipeline_cmd->add_option("--config", config_path, "Experiment JSON config")->required();

  app.add_subcommand("schema", "Print the experiment config schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*ingest) {
      const auto loaded = load_interactions(in_path);
      const auto graph = split(loaded.graph, {}, split_seed,
                               split_mode == "global" ? SplitMode::kGlobal : SplitMode::kPerUser);
      write_snapshot(graph, out_dir);
      std::cout << "users " << graph.num_users() << " items " << graph.num_items() << " interactions "
                << graph.edges().size() << " duplicates_dropped " << loaded.dedup_count << '\n';
    } else if (*synth) {
      const auto graph = generate_synthetic(spec);
      std::ofstream out(synth_out);
      for (const auto& e : graph.edges()) out << graph.user_id(e.user) << '\t' << graph.item_id(e.item) << '\n';
      std::cout << "wrote " << graph.edges().size() << " interactions\n";
    } else if (*train_cmd) {
      const auto graph = read_snapshot(snapshot);
      const auto config = train_flags.build();
      const auto result = train(graph, config);
      save_checkpoint(result.model, config, checkpoint);
      if (!log_path.empty()) write_training_log(result.log, log_path);
    } else if (*spectrum_cmd) {
      const auto graph = read_snapshot(snapshot);
      const auto model = load_checkpoint(checkpoint);
      const Matrix items = item_rows(propagate(model, normalized_adjacency(graph)), graph.num_users());
      const auto report = spectrum_report(items);
      write_spectrum_csv(report, spectrum_out);
      if (!recon_out.empty()) {
        write_reconstruction_csv(reconstruction_errors(items, recon_rank), graph.item_ids(), recon_out);
      }
      std::cout << "top_share " << report.top_share << " effective_rank " << report.effective_rank << '\n';
    } else if (*attack_cmd) {
      const std::uint64_t attack_seed = attack_train.seed.value_or(1);
      const auto graph = read_snapshot(snapshot);
      const std::vector<Index> targets = targets_path.empty()
                                             ? select_targets(graph, num_targets, attack_seed).items
                                             : read_targets(targets_path, graph);
      const auto budget = make_budget(graph, attack_size, targets.size());
      MaliciousProfileSet profiles;
      if (method == "random") {
        profiles = random_attack(graph, targets, budget, attack_seed);
      } else {
        clear.seed = attack_seed;
        profiles = clear_attack(graph, targets, budget, attack_train.build(), clear);
      }
      fs::create_directories(attack_out);
      write_profiles(profiles, graph, fs::path(attack_out) / "profiles.tsv",
                     fs::path(attack_out) / "profiles.json");
      write_targets(targets, graph, fs::path(attack_out) / "targets.txt");
      std::cout << "fake_users " << profiles.interactions.size() << " quota " << budget.per_user_quota << '\n';
    } else if (*defend_cmd) {
      auto graph = read_snapshot(snapshot);
      if (!profiles_path.empty()) graph = inject(graph, read_profiles(profiles_path, graph));
      if (ablate_suppression) defense.variant = SimVariant::kNoSuppression;
      if (ablate_detection) defense.variant = SimVariant::kNoDetection;
      const auto config = defend_train.build();
      defense.seed = config.seed;
      const auto sim = sim_train(graph, config, defense);
      fs::create_directories(defend_out);
      save_checkpoint(sim.training.model, config, fs::path(defend_out) / "checkpoint.json");
      write_training_log(sim.training.log, fs::path(defend_out) / "log.csv");
      if (!sim.history.empty()) {
        std::ofstream(fs::path(defend_out) / "detection.json")
            << detection_to_json(sim.history.back(), graph).dump(2) << '\n';
      }
      if (!sim.removed_items.empty()) {
        std::ofstream out(fs::path(defend_out) / "removed_items.txt");
        for (Index i = 0; i < graph.num_items(); ++i) {
          if (sim.removed_items[i]) out << graph.item_id(i) << '\n';
        }
      }
    } else if (*eval_cmd) {
      auto graph = read_snapshot(snapshot);
      if (!eval_profiles.empty()) graph = inject(graph, read_profiles(eval_profiles, graph));
      const auto model = load_checkpoint(checkpoint);
      if (model.num_users != graph.num_users() || model.num_items != graph.num_items()) {
        throw ConfigError("checkpoint does not match the snapshot (did you pass --profiles?)");
      }
      const std::vector<Index> targets = targets_path.empty() ? std::vector<Index>{}
                                                              : read_targets(targets_path, graph);
      const Matrix emb = propagate(model, normalized_adjacency(graph));
      const auto m = evaluate_run(emb, graph, targets, k, "evaluate", 0);
      json j = {{"k", k}, {"recall", m.recall}};
      if (!targets.empty()) {
        j["hit_ratio"] = m.hit_ratio;
        j["hit_ratio_any"] = m.hit_ratio_any;
        j["by_target"] = m.by_target;
        j["excluded_users"] = m.excluded_users;
      }
      if (eval_out.empty()) {
        std::cout << j.dump(2) << '\n';
      } else {
        std::ofstream(eval_out) << j.dump(2) << '\n';
      }
    } else if (*pipeline_cmd) {
      const auto out = run_pipeline(load_experiment_config(config_path));
      std::cout << "artifacts in " << out.string() << '\n';
    } else {
      std::cout << experiment_schema().dump(2) << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kGeneric);
  }
  return 0;
}
