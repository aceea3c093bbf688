#pragma once

#include <string>

#include <json.hpp>

#include "gclrec/attack.hpp"
#include "gclrec/defense.hpp"
#include "gclrec/pipeline.hpp"
#include "gclrec/synthetic.hpp"
#include "gclrec/trainer.hpp"

// JSON mapping of every configuration struct. Parsing starts from defaults,
// overrides the keys present and rejects unknown keys with ConfigError.
namespace gclrec {

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const ClearConfig& c);
void from_json(const nlohmann::json& j, ClearConfig& c);
void to_json(nlohmann::json& j, const DefenseConfig& c);
void from_json(const nlohmann::json& j, DefenseConfig& c);
void to_json(nlohmann::json& j, const SyntheticSpec& c);
void from_json(const nlohmann::json& j, SyntheticSpec& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::string& path);

// 16 hex digits of FNV-1a over the compact JSON dump.
std::string config_hash(const nlohmann::json& j);
// Hash of everything except output_dir, so relocated runs compare equal.
std::string experiment_hash(const ExperimentConfig& c);

// Documented key list with defaults, for the schema subcommand.
nlohmann::json experiment_schema();

}  // namespace gclrec
