#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sfl/bytes.hpp"
#include "sfl/harness/experiment.hpp"

using namespace sfl;
namespace fs = std::filesystem;

namespace {

std::string config_error_key(const std::string& yaml) {
  try {
    parse_config(yaml);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<accepted>";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sfl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Seconds-scale experiment: 400 samples, one epoch, two cheap attacks.
const char* kTiny = R"(
seeds: [0, 1]
N: [1, 3, 5]
data: {train_count: 400, val_count: 100, aux_count: 100}
training: {epochs: 1, clients: 4}
attack:
  methods: [train, naive]
  data_fraction: 0.1
  surrogate: {epochs: 1}
)";

MetricsRecord record(const std::string& attack, int N, std::uint64_t seed, double fid) {
  MetricsRecord r;
  r.config_hash = "0123456789abcdef";
  r.seed = seed;
  r.mode = "fine-tune";
  r.N = N;
  r.attack = attack;
  r.accuracy = fid / 2;
  r.fidelity = fid;
  return r;
}

}  // namespace

TEST_CASE("unknown keys are rejected by name") {
  CHECK(config_error_key("foo: 1\n") == "foo");
  CHECK(config_error_key("attack:\n  foo: 1\n") == "attack.foo");
  CHECK(config_error_key("attack:\n  gm:\n    optimizer: {kind: adam, rate: 1}\n") == "attack.gm.optimizer.rate");
  CHECK(config_error_key("eval:\n  mi: {enable: true}\n") == "eval.mi.enable");
}

TEST_CASE("invalid values name their key") {
  CHECK(config_error_key("N: 7\n") == "N");
  CHECK(config_error_key("N: [1, 0]\n") == "N");
  CHECK(config_error_key("training: {epochs: many}\n") == "training.epochs");
  CHECK(config_error_key("training: {mode: sideways}\n") == "training.mode");
  CHECK(config_error_key("attack: {budget: -5}\n") == "attack.budget");
  CHECK(config_error_key("attack: {methods: [craft, steal]}\n") == "attack.methods");
  CHECK(config_error_key("attack: {budgets: {train: 5}}\n") == "attack.budgets.train");
  CHECK(config_error_key("attack: {data_fraction: 0}\n") == "attack.data_fraction");
  CHECK(config_error_key("model: {preset: vgg99}\n") == "model.preset");
  CHECK(config_error_key("model: {units: [{type: linear, in: 10, out: 10}]}\n") == "model");
  CHECK(config_error_key("seed: 1\nseeds: [2]\n") == "seeds");
  CHECK(config_error_key("training: [1, 2]\n") == "training");
  CHECK(config_error_key("a: [unclosed\n") == "");
}

TEST_CASE("canonical form round-trips and the hash tracks result-relevant keys") {
  const auto c = parse_config(kTiny);
  CHECK(c.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(c.Ns == std::vector<int>{1, 3, 5});
  CHECK(c.training.clients == 4);
  const auto text = canonical_yaml(c);
  CHECK(canonical_yaml(parse_config(text)) == text);
  CHECK(config_hash(parse_config(text)) == config_hash(c));
  CHECK(config_hash(c).size() == 16);

  auto d = c;
  d.seeds = {7};
  d.out = "elsewhere";
  CHECK(config_hash(d) == config_hash(c));
  d.attack.base.budget += 1;
  CHECK(config_hash(d) != config_hash(c));
  CHECK(victim_hash(d) == victim_hash(c));
  d.training.l1_lambda = 1e-4;
  CHECK(victim_hash(d) != victim_hash(c));

  const auto e = parse_config("");
  CHECK(e.attack.methods.size() == 6);
  CHECK(e.budget(AttackMethod::Gm) == 10000);
  CHECK(e.budget(AttackMethod::Craft) == 20000);
}

TEST_CASE("a sweep over three split points emits three rows per attack per seed, deterministically") {
  const auto cfg = parse_config(kTiny);
  const auto a = temp_dir("sweep_a"), b = temp_dir("sweep_b");
  const auto ra = run_experiment(cfg, a.string());
  CHECK(ra.ok());
  for (const char* attack : {"victim", "train", "naive"}) {
    CHECK(std::count_if(ra.rows.begin(), ra.rows.end(), [&](const auto& r) { return r.attack == attack; }) == 6);
  }
  const auto rows = read_results_csv((a / "results.csv").string());
  CHECK(rows.size() == 18);
  for (const auto& r : rows) CHECK(r.config_hash == config_hash(cfg));

  RunOptions reuse;
  reuse.victim_cache = (a / "victims").string();
  run_experiment(cfg, b.string(), reuse);
  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
  const auto c = temp_dir("sweep_c");
  run_experiment(cfg, c.string());
  CHECK(slurp(a / "results.csv") == slurp(c / "results.csv"));

  CHECK(fs::exists(a / "attacks" / "fine-tune_N3_s1_train.json"));
  CHECK(fs::exists(a / "attacks" / "fine-tune_N3_s1_train.sflx"));
  CHECK(fs::exists(a / "fidelity_vs_N.csv"));
  CHECK_FALSE(fs::exists(a / "FAILED"));
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST_CASE("a failing run is flagged and the rest still written") {
  auto cfg = parse_config(kTiny);
  cfg.seeds = {0};
  cfg.Ns = {3};
  cfg.data.aux_count = 0;
  const auto dir = temp_dir("partial");
  RunOptions o;
  o.methods = std::vector<AttackMethod>{AttackMethod::Gm, AttackMethod::Train};
  const auto s = run_experiment(cfg, dir.string(), o);
  CHECK_FALSE(s.ok());
  CHECK(s.failures.size() == 1);
  CHECK(fs::exists(dir / "FAILED"));
  CHECK(read_results_csv((dir / "results.csv").string()).size() == 2);
  fs::remove_all(dir);
}

TEST_CASE("results.csv round trip") {
  auto r = record("gm", 3, 2, 87.125);
  r.queries_used = 1000;
  r.mi_mse = 0.00123456;
  r.asr_pgd = 12.5;
  const auto dir = temp_dir("csv");
  write_results_csv((dir / "r.csv").string(), {r});
  const auto back = read_results_csv((dir / "r.csv").string());
  REQUIRE(back.size() == 1);
  CHECK(csv_row(back[0]) == csv_row(r));
  CHECK_FALSE(back[0].asr_fgsm.has_value());
  CHECK_FALSE(back[0].wallclock_s.has_value());
  CHECK(csv_header() ==
        "config_hash,seed,mode,N,attack,queries_used,accuracy,fidelity,mi_mse,asr_fgsm,asr_pgd,wallclock_s");
  fs::remove_all(dir);
}

TEST_CASE("median matches an independent sort-based median") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(1 + rng.below(9));
    for (auto& x : v) x = rng.uniform(0.0, 100.0);
    auto s = v;
    std::sort(s.begin(), s.end());
    const double want = s.size() % 2 ? s[s.size() / 2] : (s[s.size() / 2 - 1] + s[s.size() / 2]) / 2;
    CHECK(median(v) == want);
  }
  CHECK_THROWS(median({}));
}

TEST_CASE("report: single rows, medians over seeds, fixed columns") {
  {
    const auto rep = make_report({record("gm", 1, 0, 91.5)});
    CHECK(rep.summary_csv.rfind("config_hash,mode,metric,N,victim,craft,gan,gm,train,softtrain,naive\n", 0) == 0);
    CHECK(rep.summary_csv.find("0123456789abcdef,fine-tune,fidelity,1,,,,91.5000,,,\n") != std::string::npos);
    CHECK(rep.summary_csv.find("0123456789abcdef,fine-tune,accuracy,1,,,,45.7500,,,\n") != std::string::npos);
    CHECK(rep.fidelity_vs_n_csv ==
          "config_hash,mode,attack,N,median,min,max,seeds\n0123456789abcdef,fine-tune,gm,1,91.5000,91.5000,91.5000,1\n");
  }
  std::vector<MetricsRecord> rows;
  const std::vector<double> fids = {70.0, 90.0, 80.0};
  for (std::uint64_t s = 0; s < 3; ++s) {
    rows.push_back(record("train", 1, s, fids[s]));
    rows.push_back(record("train", 5, s, fids[s] - 20));
  }
  const auto rep = make_report(rows);
  CHECK(rep.fidelity_vs_n_csv.find("fine-tune,train,1,80.0000,70.0000,90.0000,3\n") != std::string::npos);
  CHECK(rep.fidelity_vs_n_csv.find("fine-tune,train,5,60.0000,50.0000,70.0000,3\n") != std::string::npos);
  CHECK(rep.fidelity_vs_n_csv.find("train,1") < rep.fidelity_vs_n_csv.find("train,5"));

  rows.push_back(record("train", 1, 0, 1.0));
  CHECK_THROWS_AS(make_report(rows), FormatError);
  CHECK_THROWS_AS(make_report({record("steal", 1, 0, 1.0)}), FormatError);
}

TEST_CASE("report rejects inconsistent schemas") {
  const auto dir = temp_dir("schema");
  write_results_csv((dir / "a.csv").string(), {record("gm", 1, 0, 50.0)});
  {
    std::ofstream out(dir / "b.csv");
    out << "config_hash,seed,mode,N,attack,accuracy,fidelity\n0123456789abcdef,0,fine-tune,1,gm,1,2\n";
  }
  CHECK_THROWS_AS(write_report({(dir / "a.csv").string(), (dir / "b.csv").string()}, dir.string()), FormatError);
  CHECK_NOTHROW(write_report({(dir / "a.csv").string()}, dir.string()));
  CHECK(fs::exists(dir / "summary.csv"));
  fs::remove_all(dir);
}

TEST_CASE("shipped example configs load") {
  int n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(SFL_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".yaml") continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_config(e.path().string()));
    ++n;
  }
  CHECK(n >= 5);
}
