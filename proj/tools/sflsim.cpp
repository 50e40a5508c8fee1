// sflsim: split-federated-learning simulator and model-extraction harness.
//
//   sflsim train  --config c.yaml [--seed S]... [--out DIR]
//   sflsim attack --method gm --config c.yaml
//   sflsim sweep  --config c.yaml
//   sflsim report DIR... [--out DIR]
//
// Exit status: 0 ok, 1 invalid configuration or arguments, 2 some runs failed
// (partial results written, see <out>/FAILED), 3 other errors.

#include <CLI11.hpp>

#include <iostream>

#include <json.hpp>

#include "sfl/harness/experiment.hpp"

using namespace sfl;

namespace {

struct Common {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::vector<int> Ns;
  std::string out;
  std::string victim_cache;
  bool save_query_logs = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment YAML (defaults apply to omitted keys)");
  app->add_option("--seed", c.seeds, "root seed; repeat for several (overrides seeds)");
  app->add_option("--N", c.Ns, "split points; repeat for several (overrides N)");
  app->add_option("--out", c.out, "output directory (overrides out)");
  app->add_option("--victim-cache", c.victim_cache, "directory of reusable victim checkpoints");
  app->add_flag("--save-query-logs", c.save_query_logs, "write attacker query logs");
  app->add_flag("-q,--quiet", c.quiet, "no progress output");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? parse_config("") : load_config(c.config);
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (!c.Ns.empty()) cfg.Ns = c.Ns;
  if (!c.out.empty()) cfg.out = c.out;
  cfg.validate();
  return cfg;
}

int run(const Common& c, RunOptions opt) {
  const auto cfg = resolve(c);
  opt.victim_cache = c.victim_cache;
  opt.save_query_logs = c.save_query_logs;
  if (!c.quiet) opt.log = &std::cerr;
  const auto s = run_experiment(cfg, cfg.out, opt);
  if (!c.quiet) std::cerr << "config " << config_hash(cfg) << ": " << s.rows.size() << " rows in " << cfg.out << "/results.csv\n";
  if (!s.ok()) {
    std::cerr << s.failures.size() << " run(s) failed; partial results, see " << cfg.out << "/FAILED\n";
    return 2;
  }
  return 0;
}

std::vector<AttackMethod> parse_methods(const std::vector<std::string>& names) {
  std::vector<AttackMethod> out;
  for (const auto& n : names) out.push_back(parse_method(n));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split federated learning simulator with model-extraction attacks"};
  app.require_subcommand(1);

  Common train_c, attack_c, mi_c, adv_c, sweep_c;
  std::vector<std::string> attack_methods, adv_methods;

  auto* train = app.add_subcommand("train", "train victims only (checkpoints, training log, victim rows)");
  add_common(train, train_c);

  auto* attack = app.add_subcommand("attack", "train victims and run the given attacks");
  add_common(attack, attack_c);
  attack->add_option("--method", attack_methods, "craft, gan, gm, train, softtrain or naive; repeatable")->required();

  auto* mi = app.add_subcommand("mi", "train victims and measure model-inversion error");
  add_common(mi, mi_c);

  auto* adv = app.add_subcommand("adv", "run attacks and measure adversarial transfer of their surrogates");
  add_common(adv, adv_c);
  adv->add_option("--method", adv_methods, "attacks whose surrogates are evaluated (default: train)");

  auto* sweep = app.add_subcommand("sweep", "every configured attack over every N and seed");
  add_common(sweep, sweep_c);

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "median-over-seeds tables and plot data from results.csv files");
  report->add_option("inputs", report_inputs, "result directories or CSV files")->required();
  report->add_option("--out", report_out, "where summary.csv and fidelity_vs_N.csv go (default: first input dir)");

  std::string eval_config, eval_victim, eval_surrogate;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "accuracy and fidelity of a checkpoint against another");
  eval->add_option("--config", eval_config, "experiment YAML describing the validation data");
  eval->add_option("--seed", eval_seed, "data seed");
  eval->add_option("--victim", eval_victim, "victim checkpoint")->required();
  eval->add_option("--surrogate", eval_surrogate, "surrogate checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      RunOptions o;
      o.victims_only = true;
      return run(train_c, o);
    }
    if (*attack) {
      RunOptions o;
      o.methods = parse_methods(attack_methods);
      return run(attack_c, o);
    }
    if (*mi) {
      RunOptions o;
      o.victims_only = true;
      o.force_mi = true;
      return run(mi_c, o);
    }
    if (*adv) {
      RunOptions o;
      o.methods = adv_methods.empty() ? std::vector<AttackMethod>{AttackMethod::Train} : parse_methods(adv_methods);
      o.force_adv = true;
      return run(adv_c, o);
    }
    if (*sweep) return run(sweep_c, RunOptions{});
    if (*report) {
      std::string out = report_out;
      if (out.empty()) {
        out = std::filesystem::is_directory(report_inputs.front())
                  ? report_inputs.front()
                  : std::filesystem::path(report_inputs.front()).parent_path().string();
        if (out.empty()) out = ".";
      }
      const auto rep = write_report(report_inputs, out);
      std::cout << rep.text;
      return 0;
    }
    if (*eval) {
      const auto cfg = eval_config.empty() ? parse_config("") : load_config(eval_config);
      const auto data = load_data(cfg.data, eval_seed);
      const Model v = load_checkpoint(eval_victim);
      const Model s = load_checkpoint(eval_surrogate);
      nlohmann::json j = {{"victim_accuracy", accuracy(v, data.val)},
                          {"surrogate_accuracy", accuracy(s, data.val)},
                          {"fidelity", fidelity(s, v, data.val.images)}};
      std::cout << j.dump(2) << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
