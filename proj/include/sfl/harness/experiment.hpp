#pragma once
// End-to-end runs: victim training, attacks, evaluation and result files.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sfl/harness/config.hpp"
#include "sfl/harness/results.hpp"

namespace sfl {

struct ExperimentData {
  Dataset train;
  Dataset val;
  Tensor aux;  // unlabelled auxiliary images for GM (empty when unavailable)
};

// Synthetic data is drawn from `seed`; IDX data is read from the configured
// files (the auxiliary set is optional).
ExperimentData load_data(const DataConfig& d, std::uint64_t seed);

TrainingConfig training_config(const ExperimentConfig& cfg, int N, std::uint64_t seed);
AttackConfig attack_config(const ExperimentConfig& cfg, AttackMethod m, std::uint64_t seed);
// Hash of the keys that determine the victim (model, data, training).
std::string victim_hash(const ExperimentConfig& cfg);

struct RunOptions {
  std::optional<std::vector<AttackMethod>> methods;  // replaces attack.methods
  bool victims_only = false;
  bool force_adv = false;
  bool force_mi = false;
  // Trained victims are stored here and reused when the victim hash matches
  // (empty: <out>/victims).
  std::string victim_cache;
  bool save_query_logs = false;
  std::ostream* log = nullptr;  // progress lines
};

struct RunSummary {
  std::vector<MetricsRecord> rows;
  std::vector<std::string> failures;  // "<seed/N/attack>: <error>"
  bool ok() const { return failures.empty(); }
};

// Writes into out_dir:
//   config.yaml                 canonical configuration
//   results.csv                 one row per (seed, N, attack) plus a victim row
//   attacks/<mode>_N<N>_s<seed>_<attack>.json and .sflx (surrogate checkpoint)
//   querylogs/<...>.sflq        attacker gradient queries (transport framing)
//   victims/ checkpoints, training_log.csv
//   summary.csv, fidelity_vs_N.csv
//   FAILED                      only when some run failed; lists the failures
// Rows of failed runs are omitted; everything else is still written.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opt = {});

}  // namespace sfl
