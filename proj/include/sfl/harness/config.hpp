#pragma once
// Experiment configuration: YAML with a strict key schema (docs/config.md).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sfl/attacks/attacks.hpp"
#include "sfl/core/training.hpp"
#include "sfl/eval/eval.hpp"

namespace sfl {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | idx
  int classes = 10;
  std::size_t train_count = 10000;
  std::size_t val_count = 2000;
  std::size_t aux_count = 10000;
  int channels = 1;
  int height = 12;
  int width = 12;
  int blobs_per_class = 3;
  double jitter = 0.8;
  double noise = 0.1;
  // idx source
  std::string train_images, train_labels, val_images, val_labels, aux_images;
};

struct ModelConfig {
  std::string preset = "desk";
  std::vector<UnitSpec> units;  // non-empty: overrides the preset
};

struct TrainSection {
  TrainMode mode = TrainMode::FineTune;
  int clients = 10;
  PartitionMode partition = PartitionMode::IID;
  int classes_per_client = 0;
  int epochs = 20;
  std::size_t batch_size = 32;
  OptimizerConfig opt = OptimizerConfig::sgd(0.05, 0.9);
  AugmentConfig augment;
  double l1_lambda = 0.0;
  bool socket_transport = false;
};

struct AttackSection {
  std::vector<AttackMethod> methods = {AttackMethod::Train};
  double data_fraction = 0.02;
  bool stratified = false;
  double launch_fraction = 0.8;
  std::uint64_t late_k = 0;
  AttackConfig base;  // method and seed are filled per run
  std::map<AttackMethod, std::uint64_t> budgets;  // per-method override of base.budget
};

struct EvalSection {
  bool adv = false;
  AdvConfig adv_cfg;
  bool mi = false;
  InverterSpec mi_spec;
  std::size_t mi_probes = 200;
};

struct ExperimentConfig {
  std::vector<int> Ns = {1};
  std::vector<std::uint64_t> seeds = {0};
  std::string out = "results";
  bool record_wallclock = false;
  ModelConfig model;
  DataConfig data;
  TrainSection training;
  AttackSection attack;
  EvalSection eval;

  std::vector<UnitSpec> units() const;
  std::uint64_t budget(AttackMethod m) const;
  Shape input_shape() const { return {static_cast<std::size_t>(data.channels), static_cast<std::size_t>(data.height),
                                      static_cast<std::size_t>(data.width)}; }
  // Cross-field checks (N against the architecture, budgets, fractions).
  void validate() const;
};

// Desk-scale defaults for every key.
ExperimentConfig default_config();

// Parses YAML text over the defaults. Unknown keys, wrong types and invalid
// values raise ConfigError naming the dotted key path.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::string& path);

// Every key with its effective value, in schema order. Parsing the output
// yields the same configuration.
std::string canonical_yaml(const ExperimentConfig& cfg);
// FNV-1a 64 of the canonical form without seeds, out and record_wallclock,
// as 16 lowercase hex digits. Runs that differ only in those keys share it.
std::string config_hash(const ExperimentConfig& cfg);

std::string to_string(TrainMode m);

}  // namespace sfl
