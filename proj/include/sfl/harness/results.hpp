#pragma once
// results.csv schema and the per-seed median report built from it.

#include <array>
#include <string>
#include <vector>

#include "sfl/eval/eval.hpp"

namespace sfl {

inline constexpr std::array<const char*, 12> kResultColumns = {
    "config_hash", "seed", "mode", "N", "attack", "queries_used",
    "accuracy", "fidelity", "mi_mse", "asr_fgsm", "asr_pgd", "wallclock_s"};

// Attack columns of the summary table, in this order. "victim" rows carry the
// victim's own accuracy and MI error.
inline constexpr std::array<const char*, 7> kReportAttacks = {"victim", "craft", "gan", "gm", "train", "softtrain",
                                                              "naive"};
inline constexpr std::array<const char*, 6> kReportMetrics = {"accuracy", "fidelity", "queries_used",
                                                              "mi_mse",   "asr_fgsm", "asr_pgd"};

std::string csv_header();
// Percentages with 4 decimals, MSE with 8, wallclock with 3; absent optional
// values are empty cells.
std::string csv_row(const MetricsRecord& r);
void write_results_csv(const std::string& path, const std::vector<MetricsRecord>& rows);
// Throws FormatError when the header differs from kResultColumns or a row
// does not parse.
std::vector<MetricsRecord> read_results_csv(const std::string& path);

// Median of a non-empty sample; the mean of the two middle values for even
// sizes.
double median(std::vector<double> v);

struct Report {
  std::string summary_csv;       // config_hash,mode,metric,N,<kReportAttacks...>
  std::string fidelity_vs_n_csv;  // config_hash,mode,attack,N,median,min,max,seeds
  std::string text;               // accuracy and fidelity tables for the terminal
};

Report make_report(const std::vector<MetricsRecord>& rows);

// Reads results.csv from every input (a directory or a CSV path), checks the
// schemas agree, and writes summary.csv and fidelity_vs_N.csv into out_dir.
Report write_report(const std::vector<std::string>& inputs, const std::string& out_dir);

}  // namespace sfl
