#include "gclrec/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "gclrec/error.hpp"

namespace gclrec {

using nlohmann::json;

namespace {

// Reads optional keys into fields and rejects anything it was not asked for.
class Fields {
 public:
  Fields(const json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j.is_object()) throw ConfigError(scope_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(scope_ + "." + key + ": wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(scope_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string scope_;
  std::set<std::string> seen_;
};

const char* augmentation_name(Augmentation a) {
  return a == Augmentation::kEdgeDropout ? "edge_dropout" : "embedding_noise";
}

Augmentation parse_augmentation(const std::string& s) {
  if (s == "edge_dropout") return Augmentation::kEdgeDropout;
  if (s == "embedding_noise") return Augmentation::kEmbeddingNoise;
  throw ConfigError("unknown augmentation '" + s + "'");
}

const char* norm_name(DispersionNorm n) { return n == DispersionNorm::kFrobenius ? "frobenius" : "l1"; }

DispersionNorm parse_norm(const std::string& s) {
  if (s == "l1") return DispersionNorm::kEntrywiseL1;
  if (s == "frobenius") return DispersionNorm::kFrobenius;
  throw ConfigError("unknown dispersion norm '" + s + "'");
}

const char* variant_name(SimVariant v) {
  switch (v) {
    case SimVariant::kNoSuppression: return "no_suppression";
    case SimVariant::kNoDetection: return "no_detection";
    default: return "full";
  }
}

SimVariant parse_variant(const std::string& s) {
  if (s == "full") return SimVariant::kFull;
  if (s == "no_suppression") return SimVariant::kNoSuppression;
  if (s == "no_detection") return SimVariant::kNoDetection;
  throw ConfigError("unknown defense variant '" + s + "'");
}

}  // namespace

void to_json(json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"optimizer", c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_epsilon", c.adam_epsilon},
       {"seed", c.seed},
       {"dim", c.dim},
       {"layers", c.layers},
       {"temperature", c.temperature},
       {"gcl_weight", c.gcl_weight},
       {"augmentation", augmentation_name(c.augmentation.mode)},
       {"dropout", c.augmentation.dropout},
       {"noise", c.augmentation.noise},
       {"l2", c.l2},
       {"gcl_mean", c.gcl_mean},
       {"patience", c.patience},
       {"eval_k", c.eval_k},
       {"track_validation", c.track_validation}};
}

void from_json(const json& j, TrainConfig& c) {
  Fields f(j, "train");
  std::string optimizer = c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd";
  std::string augmentation = augmentation_name(c.augmentation.mode);
  f.get("batch_size", c.batch_size);
  f.get("learning_rate", c.learning_rate);
  f.get("epochs", c.epochs);
  f.get("optimizer", optimizer);
  f.get("adam_beta1", c.adam_beta1);
  f.get("adam_beta2", c.adam_beta2);
  f.get("adam_epsilon", c.adam_epsilon);
  f.get("seed", c.seed);
  f.get("dim", c.dim);
  f.get("layers", c.layers);
  f.get("temperature", c.temperature);
  f.get("gcl_weight", c.gcl_weight);
  f.get("augmentation", augmentation);
  f.get("dropout", c.augmentation.dropout);
  f.get("noise", c.augmentation.noise);
  f.get("l2", c.l2);
  f.get("gcl_mean", c.gcl_mean);
  f.get("patience", c.patience);
  f.get("eval_k", c.eval_k);
  f.get("track_validation", c.track_validation);
  f.finish();
  if (optimizer == "adam") {
    c.optimizer = OptimizerKind::kAdam;
  } else if (optimizer == "sgd") {
    c.optimizer = OptimizerKind::kSgd;
  } else {
    throw ConfigError("unknown optimizer '" + optimizer + "'");
  }
  c.augmentation.mode = parse_augmentation(augmentation);
}

void to_json(json& j, const ClearConfig& c) {
  j = {{"alpha", c.alpha},
       {"outer_iterations", c.outer_iterations},
       {"inner_epochs", c.inner_epochs},
       {"inner_to_convergence", c.inner_to_convergence},
       {"outer_steps", c.outer_steps},
       {"outer_learning_rate", c.outer_learning_rate},
       {"rank_k", c.rank_k},
       {"norm", norm_name(c.norm)},
       {"seed", c.seed}};
}

void from_json(const json& j, ClearConfig& c) {
  Fields f(j, "clear");
  std::string norm = norm_name(c.norm);
  f.get("alpha", c.alpha);
  f.get("outer_iterations", c.outer_iterations);
  f.get("inner_epochs", c.inner_epochs);
  f.get("inner_to_convergence", c.inner_to_convergence);
  f.get("outer_steps", c.outer_steps);
  f.get("outer_learning_rate", c.outer_learning_rate);
  f.get("rank_k", c.rank_k);
  f.get("norm", norm);
  f.get("seed", c.seed);
  f.finish();
  c.norm = parse_norm(norm);
}

void to_json(json& j, const DefenseConfig& c) {
  j = {{"rank", c.rank},
       {"gamma", c.gamma},
       {"top_m", c.top_m},
       {"lambda_mit", c.lambda_mit},
       {"variant", variant_name(c.variant)},
       {"random_candidates", c.random_candidates},
       {"seed", c.seed}};
}

void from_json(const json& j, DefenseConfig& c) {
  Fields f(j, "defense");
  std::string variant = variant_name(c.variant);
  f.get("rank", c.rank);
  f.get("gamma", c.gamma);
  f.get("top_m", c.top_m);
  f.get("lambda_mit", c.lambda_mit);
  f.get("variant", variant);
  f.get("random_candidates", c.random_candidates);
  f.get("seed", c.seed);
  f.finish();
  c.variant = parse_variant(variant);
}

void to_json(json& j, const SyntheticSpec& c) {
  j = {{"users", c.users},       {"items", c.items},
       {"exponent", c.exponent}, {"density", c.density},
       {"degree_sigma", c.degree_sigma}, {"communities", c.communities},
       {"affinity", c.affinity},         {"seed", c.seed}};
}

void from_json(const json& j, SyntheticSpec& c) {
  Fields f(j, "synthetic");
  f.get("users", c.users);
  f.get("items", c.items);
  f.get("exponent", c.exponent);
  f.get("density", c.density);
  f.get("degree_sigma", c.degree_sigma);
  f.get("communities", c.communities);
  f.get("affinity", c.affinity);
  f.get("seed", c.seed);
  f.finish();
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"dataset", c.dataset},
       {"synthetic", c.synthetic},
       {"split", {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}}},
       {"split_mode", c.split_mode == SplitMode::kGlobal ? "global" : "per_user"},
       {"num_targets", c.num_targets},
       {"cold_fraction", c.cold_fraction},
       {"train", c.train},
       {"attack", attack_method_name(c.attack)},
       {"attack_size", c.attack_size},
       {"clear", c.clear},
       {"defense_enabled", c.defense},
       {"defense", c.defense_config},
       {"k", c.k},
       {"output_dir", c.output_dir},
       {"seeds", c.seeds}};
}

void from_json(const json& j, ExperimentConfig& c) {
  Fields f(j, "experiment");
  std::string split_mode = c.split_mode == SplitMode::kGlobal ? "global" : "per_user";
  std::string attack = attack_method_name(c.attack);
  f.get("dataset", c.dataset);
  if (const json* s = f.sub("synthetic")) c.synthetic = s->get<SyntheticSpec>();
  if (const json* s = f.sub("split")) {
    Fields g(*s, "split");
    g.get("train", c.split.train);
    g.get("validation", c.split.validation);
    g.get("test", c.split.test);
    g.finish();
  }
  f.get("split_mode", split_mode);
  f.get("num_targets", c.num_targets);
  f.get("cold_fraction", c.cold_fraction);
  if (const json* s = f.sub("train")) c.train = s->get<TrainConfig>();
  f.get("attack", attack);
  f.get("attack_size", c.attack_size);
  if (const json* s = f.sub("clear")) c.clear = s->get<ClearConfig>();
  f.get("defense_enabled", c.defense);
  if (const json* s = f.sub("defense")) c.defense_config = s->get<DefenseConfig>();
  f.get("k", c.k);
  f.get("output_dir", c.output_dir);
  f.get("seeds", c.seeds);
  f.finish();
  if (split_mode == "per_user") {
    c.split_mode = SplitMode::kPerUser;
  } else if (split_mode == "global") {
    c.split_mode = SplitMode::kGlobal;
  } else {
    throw ConfigError("unknown split_mode '" + split_mode + "'");
  }
  c.attack = parse_attack_method(attack);
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  auto config = j.get<ExperimentConfig>();
  config.validate();
  return config;
}

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string experiment_hash(const ExperimentConfig& c) {
  json j = c;
  j.erase("output_dir");
  return config_hash(j);
}

json experiment_schema() {
  return {
      {"format", "JSON object; every key optional, unknown keys rejected"},
      {"defaults", json(ExperimentConfig{})},
      {"enums",
       {{"split_mode", {"per_user", "global"}},
        {"attack", {"none", "random", "clear"}},
        {"train.optimizer", {"adam", "sgd"}},
        {"train.augmentation", {"embedding_noise", "edge_dropout"}},
        {"clear.norm", {"l1", "frobenius"}},
        {"defense.variant", {"full", "no_suppression", "no_detection"}}}},
      {"notes",
       {{"dataset", "TSV path; empty selects the synthetic generator"},
        {"seeds", "one full run per seed, written to seed_<s>/"},
        {"k", "cutoff for Recall@k and HitRatio@k"}}},
  };
}

}  // namespace gclrec
