#include "sfl/harness/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "sfl/bytes.hpp"
#include "sfl/core/parallel.hpp"
#include "sfl/core/presets.hpp"

namespace sfl {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Forwards to the frozen server and keeps every query.
class LoggingOracle final : public GradientQueryApi {
 public:
  LoggingOracle(GradientQueryApi& inner, std::uint32_t client, bool keep) : inner_(inner), client_(client), keep_(keep) {}

  Tensor gradient_query(const Tensor& A, std::span<const int> labels) override {
    Tensor g = inner_.gradient_query(A, labels);
    if (keep_) log.records.push_back({client_, step_, 0, A, {labels.begin(), labels.end()}, g});
    ++step_;
    return g;
  }
  Shape input_shape() const override { return inner_.input_shape(); }
  int n_classes() const override { return inner_.n_classes(); }

  QueryLog log;

 private:
  GradientQueryApi& inner_;
  std::uint32_t client_;
  bool keep_;
  std::uint64_t step_ = 0;
};

nlohmann::json opt_json(const OptimizerConfig& o) {
  return {{"kind", o.kind == OptimizerKind::SGD ? "sgd" : "adam"},
          {"lr", o.lr},
          {"momentum", o.momentum},
          {"milestones", o.milestones},
          {"gamma", o.gamma}};
}

nlohmann::json attack_json(const AttackConfig& c) {
  nlohmann::json j = {{"method", to_string(c.method)},
                      {"variant", to_string(c.variant)},
                      {"budget", c.budget},
                      {"query_chunk", c.query_chunk},
                      {"seed", c.seed}};
  switch (c.method) {
    case AttackMethod::Craft: j["craft"] = {{"steps", c.craft.steps}, {"lr", c.craft.lr}, {"batch", c.craft.batch}}; break;
    case AttackMethod::Gan:
      j["gan"] = {{"latent_dim", c.gan.latent_dim},
                  {"base_channels", c.gan.base_channels},
                  {"lr", c.gan.lr},
                  {"diversity_weight", c.gan.diversity_weight},
                  {"diversity_cap", c.gan.diversity_cap},
                  {"batch", c.gan.batch},
                  {"phase2_samples", c.gan.phase2_samples}};
      break;
    case AttackMethod::Gm:
      j["gm"] = {{"epochs", c.gm.epochs}, {"batch", c.gm.batch}, {"optimizer", opt_json(c.gm.opt)}};
      break;
    case AttackMethod::SoftTrain: j["softtrain"] = {{"alpha", c.soft.alpha}}; break;
    default: break;
  }
  if (c.method != AttackMethod::Gm) {
    const auto& s = c.surrogate;
    j["surrogate"] = {{"epochs", s.epochs},
                      {"batch_size", s.batch_size},
                      {"optimizer", opt_json(s.opt)},
                      {"augment", s.augment.enabled},
                      {"hard_weight", s.hard_weight},
                      {"soft_weight", s.soft_weight}};
  }
  return j;
}

std::string run_name(const std::string& mode, int N, std::uint64_t seed, const std::string& what) {
  return mode + "_N" + std::to_string(N) + "_s" + std::to_string(seed) + "_" + what;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

Tensor probe_images(const Dataset& train, std::size_t count) {
  count = std::min(count, train.size());
  const std::size_t stride = train.size() / count;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < count; ++i) idx.push_back(i * stride);
  return train.subset(idx).images;
}

}  // namespace

ExperimentData load_data(const DataConfig& d, std::uint64_t seed) {
  ExperimentData out;
  if (d.source == "synthetic") {
    auto shape = [&](SyntheticSpec s, std::size_t count) {
      s.count = count;
      s.n_classes = d.classes;
      s.channels = d.channels;
      s.height = d.height;
      s.width = d.width;
      s.blobs_per_class = d.blobs_per_class;
      s.jitter = d.jitter;
      s.noise = d.noise;
      return s;
    };
    out.train = synthesize(shape(desk_train_spec(seed), d.train_count));
    out.val = synthesize(shape(desk_val_spec(seed), d.val_count));
    if (d.aux_count > 0) out.aux = synthesize(shape(desk_aux_spec(seed), d.aux_count)).images;
  } else {
    out.train = load_idx(d.train_images, d.train_labels, d.classes);
    out.val = load_idx(d.val_images, d.val_labels, d.classes);
    if (!d.aux_images.empty()) out.aux = decode_idx_images(read_file(d.aux_images));
    const Shape want = {static_cast<std::size_t>(d.channels), static_cast<std::size_t>(d.height),
                        static_cast<std::size_t>(d.width)};
    for (const Tensor* t : {&out.train.images, &out.val.images, &out.aux}) {
      if (t->numel() > 0 && t->sample_shape() != want) {
        throw ConfigError("data", "IDX images are " + to_string(t->sample_shape()) + ", config says " + to_string(want));
      }
    }
  }
  return out;
}

TrainingConfig training_config(const ExperimentConfig& cfg, int N, std::uint64_t seed) {
  const auto& t = cfg.training;
  TrainingConfig tc;
  // The victim is always trained end to end; fine-tune mode then freezes it.
  tc.mode = TrainMode::FromScratch;
  tc.clients = t.clients;
  tc.N = N;
  tc.partition = t.partition;
  tc.classes_per_client = t.classes_per_client;
  tc.epochs = t.epochs;
  tc.batch_size = t.batch_size;
  tc.client_opt = t.opt;
  tc.server_opt = t.opt;
  tc.augment = t.augment;
  tc.l1_lambda = t.l1_lambda;
  tc.seed = seed;
  tc.schedule_seed = seed;
  tc.workers = worker_count();
  tc.socket_transport = t.socket_transport;
  tc.eval_every = 1;
  return tc;
}

AttackConfig attack_config(const ExperimentConfig& cfg, AttackMethod m, std::uint64_t seed) {
  AttackConfig ac = cfg.attack.base;
  ac.method = m;
  ac.seed = seed;
  ac.surrogate.seed = seed;
  ac.budget = cfg.budget(m);
  return ac;
}

std::string victim_hash(const ExperimentConfig& cfg) {
  ExperimentConfig v = cfg;
  const auto d = default_config();
  v.Ns = {1};
  v.attack = d.attack;
  v.eval = d.eval;
  return config_hash(v);
}

RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, const RunOptions& opt) {
  cfg.validate();
  const fs::path out(out_dir);
  const fs::path cache = opt.victim_cache.empty() ? out / "victims" : fs::path(opt.victim_cache);
  for (const auto& d : {out, out / "attacks", cache}) fs::create_directories(d);
  if (opt.save_query_logs) fs::create_directories(out / "querylogs");
  fs::remove(out / "FAILED");
  write_text(out / "config.yaml", canonical_yaml(cfg));

  const auto hash = config_hash(cfg);
  const auto vhash = victim_hash(cfg);
  const auto methods = opt.methods ? *opt.methods : cfg.attack.methods;
  const bool do_adv = cfg.eval.adv || opt.force_adv;
  const bool do_mi = cfg.eval.mi || opt.force_mi;
  const bool scratch = cfg.training.mode == TrainMode::FromScratch;
  const std::string mode = to_string(cfg.training.mode);
  const auto units = cfg.units();
  auto say = [&](const std::string& s) {
    if (opt.log) *opt.log << s << std::endl;
  };

  RunSummary summary;
  std::ofstream tlog(out / "training_log.csv", std::ios::trunc);
  tlog << "seed,N,epoch,train_loss,val_accuracy,lr\n";

  for (const auto seed : cfg.seeds) {
    ExperimentData data;
    std::vector<std::size_t> pool;
    Dataset subset;
    try {
      data = load_data(cfg.data, seed);
      pool.resize(data.train.size());
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      const auto sub = attacker_subset(data.train, pool, cfg.attack.data_fraction, cfg.attack.stratified,
                                       Rng(seed).child("attacker-subset"));
      subset = data.train.subset(sub);
    } catch (const Error& e) {
      summary.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
      say("FAILED seed " + std::to_string(seed) + ": " + e.what());
      continue;
    }

    for (const int N : cfg.Ns) {
      const auto tag = "seed " + std::to_string(seed) + " N " + std::to_string(N);
      const auto tc = training_config(cfg, N, seed);
      const Model init = make_model(units, cfg.input_shape(), Rng(seed).child("init"));

      // Clean victim, cached by the hash of what determines it.
      Model victim;
      try {
        const auto t0 = Clock::now();
        const auto ck = cache / ("victim_" + vhash + "_N" + std::to_string(N) + "_s" + std::to_string(seed) + ".sflx");
        if (fs::exists(ck)) {
          victim = load_checkpoint(ck.string());
          say("[" + tag + "] victim loaded from " + ck.string());
        } else {
          auto tr = run_training(init, tc, data.train, pool, &data.val);
          victim = tr.model.join();
          save_checkpoint(victim, ck.string());
          for (const auto& e : tr.epochs) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%llu,%d,%d,%.6f,%.4f,%.6g\n", static_cast<unsigned long long>(seed), N,
                          e.epoch, e.train_loss, e.val_accuracy, e.lr);
            tlog << buf;
          }
          tlog.flush();
        }
        MetricsRecord row;
        row.config_hash = hash;
        row.seed = seed;
        row.mode = mode;
        row.N = N;
        row.attack = "victim";
        row.accuracy = accuracy(victim, data.val);
        row.fidelity = 100.0;
        if (do_mi) {
          const SplitModel sv = split(victim, N);
          InverterSpec spec = cfg.eval.mi_spec;
          spec.seed = seed;
          row.mi_mse = model_inversion(sv.client_units(), sv.client, sv.input_shape, data.val.images,
                                       probe_images(data.train, cfg.eval.mi_probes), spec);
        }
        if (cfg.record_wallclock) row.wallclock_s = seconds_since(t0);
        row.validate();
        char buf[160];
        std::snprintf(buf, sizeof buf, "] victim accuracy %.2f", row.accuracy);
        say("[" + tag + buf + (row.mi_mse ? " mi_mse " + std::to_string(*row.mi_mse) : std::string()));
        summary.rows.push_back(row);
      } catch (const Error& e) {
        summary.failures.push_back(tag + " victim: " + e.what());
        say("FAILED [" + tag + "] victim: " + e.what());
        continue;
      }
      if (opt.victims_only) continue;

      const SplitModel clean = split(victim, N);
      for (const auto m : methods) {
        const auto name = to_string(m);
        const auto t0 = Clock::now();
        try {
          const AttackConfig ac = attack_config(cfg, m, seed);
          AttackResult r;
          Model deployed = victim;
          QueryLog qlog;
          if (m == AttackMethod::Train) {
            r = train_me(victim_view(clean), subset, ac);
          } else if (m == AttackMethod::Naive) {
            r = naive_baseline(units, cfg.input_shape(), N, subset, ac);
          } else if (!scratch) {
            FrozenServerOracle oracle({clean.server_units().begin(), clean.server_units().end()}, clean.server,
                                      clean.cut_shape(), ac.budget);
            LoggingOracle api(oracle, static_cast<std::uint32_t>(cfg.training.clients), opt.save_query_logs);
            const auto v = victim_view(clean);
            switch (m) {
              case AttackMethod::Craft: r = craft_me(api, v, ac); break;
              case AttackMethod::Gan: r = gan_me(api, v, ac); break;
              case AttackMethod::Gm:
                if (data.aux.numel() == 0) throw ConfigError("data.aux_images", "gm needs auxiliary images");
                r = gm_me(api, v, data.aux, ac);
                break;
              case AttackMethod::SoftTrain: r = softtrain_me(api, v, subset, ac); break;
              default: break;
            }
            qlog = std::move(api.log);
          } else {
            ScratchAttackConfig sc;
            sc.attack = ac;
            sc.launch_epoch = static_cast<int>(std::floor(cfg.attack.launch_fraction * cfg.training.epochs));
            sc.late_k = cfg.attack.late_k;
            if (m == AttackMethod::Gm && data.aux.numel() == 0) {
              throw ConfigError("data.aux_images", "gm needs auxiliary images");
            }
            auto atk = make_scratch_attack(sc, &data.aux, &subset);
            auto tr = run_training(init, tc, data.train, pool, nullptr, atk.get());
            r = atk->finish(victim_view(tr.model), tr.total_steps);
            deployed = tr.model.join();
            qlog = std::move(tr.attacker_log);
          }

          const Model s = r.surrogate.join();
          MetricsRecord row;
          row.config_hash = hash;
          row.seed = seed;
          row.mode = mode;
          row.N = N;
          row.attack = name;
          row.queries_used = r.queries_used;
          row.accuracy = accuracy(s, data.val);
          row.fidelity = fidelity(s, deployed, data.val.images);
          if (do_adv) {
            AdvConfig a = cfg.eval.adv_cfg;
            a.seed = seed;
            const auto adv = adversarial_transfer(s, deployed, data.val, a);
            row.asr_fgsm = adv.asr_fgsm;
            row.asr_pgd = adv.asr_pgd;
          }
          const double wall = seconds_since(t0);
          if (cfg.record_wallclock) row.wallclock_s = wall;
          row.validate();

          const auto base = run_name(mode, N, seed, name);
          nlohmann::json j = {{"attack", name},
                              {"config_hash", hash},
                              {"config", attack_json(ac)},
                              {"mode", mode},
                              {"N", N},
                              {"seed", seed},
                              {"queries_used", r.queries_used},
                              {"budget", r.budget},
                              {"training_samples", r.training_samples},
                              {"accuracy", row.accuracy},
                              {"fidelity", row.fidelity},
                              {"victim_accuracy", accuracy(deployed, data.val)}};
          if (row.asr_fgsm) {
            j["asr_fgsm"] = *row.asr_fgsm;
            j["asr_pgd"] = *row.asr_pgd;
          }
          j["wallclock_s"] = cfg.record_wallclock ? nlohmann::json(wall) : nlohmann::json(nullptr);
          write_text(out / "attacks" / (base + ".json"), j.dump(2) + "\n");
          save_checkpoint(s, (out / "attacks" / (base + ".sflx")).string());
          if (opt.save_query_logs && !qlog.records.empty()) {
            qlog.save((out / "querylogs" / (base + ".sflq")).string());
          }
          char buf[200];
          std::snprintf(buf, sizeof buf, "] %-9s accuracy %6.2f fidelity %6.2f queries %llu (%.1fs)", name.c_str(),
                        row.accuracy, row.fidelity, static_cast<unsigned long long>(row.queries_used), wall);
          say("[" + tag + buf);
          summary.rows.push_back(row);
        } catch (const Error& e) {
          summary.failures.push_back(tag + " " + name + ": " + e.what());
          say("FAILED [" + tag + "] " + name + ": " + e.what());
        }
      }
    }
  }

  write_results_csv((out / "results.csv").string(), summary.rows);
  const auto rep = make_report(summary.rows);
  write_text(out / "summary.csv", rep.summary_csv);
  write_text(out / "fidelity_vs_N.csv", rep.fidelity_vs_n_csv);
  if (!summary.ok()) {
    std::string body;
    for (const auto& f : summary.failures) body += f + "\n";
    write_text(out / "FAILED", body);
  }
  return summary;
}

}  // namespace sfl
