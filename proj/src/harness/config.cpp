#include "sfl/harness/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "sfl/core/presets.hpp"

namespace sfl {

std::string to_string(TrainMode m) { return m == TrainMode::FineTune ? "fine-tune" : "from-scratch"; }

namespace {

std::string join_key(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check_map(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!n.IsMap()) throw ConfigError(path, "expected a mapping");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) throw ConfigError(join_key(path, key), "unknown key");
  }
}

template <class T>
T scalar(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw ConfigError(key, "expected a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(key, "cannot read '" + n.Scalar() + "' as the expected type");
  }
}

// Assigns map[key] to dst when present.
template <class T>
void get(const YAML::Node& map, const std::string& path, const char* key, T& dst) {
  const auto n = map[key];
  if (!n) return;
  const auto full = join_key(path, key);
  if constexpr (std::is_same_v<T, bool> || std::is_same_v<T, std::string>) {
    dst = scalar<T>(n, full);
  } else if constexpr (std::is_integral_v<T>) {
    const auto s = n.IsScalar() ? n.Scalar() : std::string();
    if constexpr (std::is_unsigned_v<T>) {
      if (!s.empty() && s[0] == '-') throw ConfigError(full, "must be non-negative");
    }
    dst = scalar<T>(n, full);
  } else {
    dst = scalar<T>(n, full);
  }
}

template <class T>
std::vector<T> scalar_or_list(const YAML::Node& n, const std::string& key) {
  std::vector<T> out;
  if (n.IsScalar()) {
    out.push_back(scalar<T>(n, key));
  } else if (n.IsSequence()) {
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(scalar<T>(n[i], key + "[" + std::to_string(i) + "]"));
  } else {
    throw ConfigError(key, "expected a scalar or a list");
  }
  if (out.empty()) throw ConfigError(key, "must not be empty");
  return out;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

void read_optimizer(const YAML::Node& n, const std::string& path, OptimizerConfig& o) {
  check_map(n, path, {"kind", "lr", "momentum", "beta1", "beta2", "eps", "milestones", "gamma"});
  if (n["kind"]) {
    const auto k = scalar<std::string>(n["kind"], path + ".kind");
    if (k == "sgd") o.kind = OptimizerKind::SGD;
    else if (k == "adam") o.kind = OptimizerKind::Adam;
    else throw ConfigError(path + ".kind", "expected sgd or adam, got '" + k + "'");
  }
  get(n, path, "lr", o.lr);
  get(n, path, "momentum", o.momentum);
  get(n, path, "beta1", o.beta1);
  get(n, path, "beta2", o.beta2);
  get(n, path, "eps", o.eps);
  get(n, path, "gamma", o.gamma);
  if (n["milestones"]) {
    const auto m = n["milestones"];
    if (!m.IsSequence()) throw ConfigError(path + ".milestones", "expected a list");
    o.milestones.clear();
    for (std::size_t i = 0; i < m.size(); ++i) o.milestones.push_back(scalar<int>(m[i], path + ".milestones"));
  }
  require(o.lr > 0.0, path + ".lr", "must be positive");
  require(o.momentum >= 0.0 && o.momentum < 1.0, path + ".momentum", "must be in [0, 1)");
  require(o.gamma > 0.0, path + ".gamma", "must be positive");
  require(std::is_sorted(o.milestones.begin(), o.milestones.end()), path + ".milestones", "must be ascending");
}

void read_augment(const YAML::Node& n, const std::string& path, AugmentConfig& a) {
  if (n.IsScalar()) {
    a.enabled = scalar<bool>(n, path);
    return;
  }
  check_map(n, path, {"enabled", "flip_prob", "max_rotation_deg"});
  get(n, path, "enabled", a.enabled);
  get(n, path, "flip_prob", a.flip_prob);
  get(n, path, "max_rotation_deg", a.max_rotation_deg);
  require(a.flip_prob >= 0.0 && a.flip_prob <= 1.0, path + ".flip_prob", "must be in [0, 1]");
}

UnitSpec read_unit(const YAML::Node& n, const std::string& path) {
  check_map(n, path, {"type", "in", "out", "kernel", "stride", "pad"});
  if (!n["type"]) throw ConfigError(path + ".type", "missing");
  const auto t = scalar<std::string>(n["type"], path + ".type");
  UnitSpec u;
  if (t == "linear") u.kind = UnitKind::Linear;
  else if (t == "conv2d") u.kind = UnitKind::Conv2d;
  else if (t == "relu") u.kind = UnitKind::ReLU;
  else if (t == "maxpool2x2") u.kind = UnitKind::MaxPool2x2;
  else if (t == "flatten") u.kind = UnitKind::Flatten;
  else throw ConfigError(path + ".type", "unknown unit type '" + t + "'");
  get(n, path, "in", u.in);
  get(n, path, "out", u.out);
  get(n, path, "kernel", u.kernel);
  get(n, path, "stride", u.stride);
  get(n, path, "pad", u.pad);
  return u;
}

const char* unit_type(UnitKind k) {
  switch (k) {
    case UnitKind::Linear: return "linear";
    case UnitKind::Conv2d: return "conv2d";
    case UnitKind::ReLU: return "relu";
    case UnitKind::MaxPool2x2: return "maxpool2x2";
    case UnitKind::Flatten: return "flatten";
    default: return "unsupported";
  }
}

void read_model(const YAML::Node& n, ModelConfig& m) {
  check_map(n, "model", {"preset", "units"});
  get(n, "model", "preset", m.preset);
  if (n["units"]) {
    const auto us = n["units"];
    if (!us.IsSequence()) throw ConfigError("model.units", "expected a list");
    m.units.clear();
    for (std::size_t i = 0; i < us.size(); ++i) m.units.push_back(read_unit(us[i], "model.units[" + std::to_string(i) + "]"));
  }
}

void read_data(const YAML::Node& n, DataConfig& d) {
  const std::string p = "data";
  check_map(n, p, {"source", "classes", "train_count", "val_count", "aux_count", "channels", "height", "width",
                   "blobs_per_class", "jitter", "noise", "train_images", "train_labels", "val_images", "val_labels",
                   "aux_images"});
  get(n, p, "source", d.source);
  get(n, p, "classes", d.classes);
  get(n, p, "train_count", d.train_count);
  get(n, p, "val_count", d.val_count);
  get(n, p, "aux_count", d.aux_count);
  get(n, p, "channels", d.channels);
  get(n, p, "height", d.height);
  get(n, p, "width", d.width);
  get(n, p, "blobs_per_class", d.blobs_per_class);
  get(n, p, "jitter", d.jitter);
  get(n, p, "noise", d.noise);
  get(n, p, "train_images", d.train_images);
  get(n, p, "train_labels", d.train_labels);
  get(n, p, "val_images", d.val_images);
  get(n, p, "val_labels", d.val_labels);
  get(n, p, "aux_images", d.aux_images);
}

void read_training(const YAML::Node& n, TrainSection& t) {
  const std::string p = "training";
  check_map(n, p, {"mode", "clients", "partition", "classes_per_client", "epochs", "batch_size", "optimizer", "augment",
                   "l1_lambda", "socket_transport"});
  if (n["mode"]) {
    const auto m = scalar<std::string>(n["mode"], p + ".mode");
    if (m == "fine-tune") t.mode = TrainMode::FineTune;
    else if (m == "from-scratch") t.mode = TrainMode::FromScratch;
    else throw ConfigError(p + ".mode", "expected fine-tune or from-scratch, got '" + m + "'");
  }
  get(n, p, "clients", t.clients);
  if (n["partition"]) {
    const auto m = scalar<std::string>(n["partition"], p + ".partition");
    if (m == "iid") t.partition = PartitionMode::IID;
    else if (m == "class-limited") t.partition = PartitionMode::ClassLimited;
    else throw ConfigError(p + ".partition", "expected iid or class-limited, got '" + m + "'");
  }
  get(n, p, "classes_per_client", t.classes_per_client);
  get(n, p, "epochs", t.epochs);
  get(n, p, "batch_size", t.batch_size);
  if (n["optimizer"]) read_optimizer(n["optimizer"], p + ".optimizer", t.opt);
  if (n["augment"]) read_augment(n["augment"], p + ".augment", t.augment);
  get(n, p, "l1_lambda", t.l1_lambda);
  get(n, p, "socket_transport", t.socket_transport);
}

void read_surrogate(const YAML::Node& n, const std::string& p, SurrogateTrainingConfig& s) {
  check_map(n, p, {"epochs", "batch_size", "optimizer", "augment", "hard_weight", "soft_weight"});
  get(n, p, "epochs", s.epochs);
  get(n, p, "batch_size", s.batch_size);
  if (n["optimizer"]) read_optimizer(n["optimizer"], p + ".optimizer", s.opt);
  if (n["augment"]) read_augment(n["augment"], p + ".augment", s.augment);
  get(n, p, "hard_weight", s.hard_weight);
  get(n, p, "soft_weight", s.soft_weight);
}

void read_attack(const YAML::Node& n, AttackSection& a) {
  const std::string p = "attack";
  check_map(n, p, {"methods", "variant", "budget", "budgets", "data_fraction", "stratified", "launch_fraction", "late_k",
                   "query_chunk", "craft", "gan", "gm", "softtrain", "surrogate"});
  if (n["methods"]) {
    a.methods.clear();
    for (const auto& s : scalar_or_list<std::string>(n["methods"], p + ".methods")) {
      try {
        a.methods.push_back(parse_method(s));
      } catch (const ConfigError& e) {
        throw ConfigError(p + ".methods", e.what());
      }
    }
  }
  if (n["variant"]) {
    try {
      a.base.variant = parse_variant(scalar<std::string>(n["variant"], p + ".variant"));
    } catch (const ConfigError& e) {
      throw ConfigError(p + ".variant", e.what());
    }
  }
  get(n, p, "budget", a.base.budget);
  if (n["budgets"]) {
    const auto b = n["budgets"];
    check_map(b, p + ".budgets", {"craft", "gan", "gm", "softtrain"});
    for (const auto& kv : b) {
      const auto name = kv.first.as<std::string>();
      const auto key = p + ".budgets." + name;
      const auto& s = kv.second;
      if (s.IsScalar() && !s.Scalar().empty() && s.Scalar()[0] == '-') throw ConfigError(key, "must be non-negative");
      a.budgets[parse_method(name)] = scalar<std::uint64_t>(s, key);
    }
  }
  get(n, p, "data_fraction", a.data_fraction);
  get(n, p, "stratified", a.stratified);
  get(n, p, "launch_fraction", a.launch_fraction);
  get(n, p, "late_k", a.late_k);
  get(n, p, "query_chunk", a.base.query_chunk);
  if (n["craft"]) {
    const auto c = n["craft"];
    const std::string q = p + ".craft";
    check_map(c, q, {"steps", "lr", "batch"});
    get(c, q, "steps", a.base.craft.steps);
    get(c, q, "lr", a.base.craft.lr);
    get(c, q, "batch", a.base.craft.batch);
  }
  if (n["gan"]) {
    const auto c = n["gan"];
    const std::string q = p + ".gan";
    check_map(c, q, {"latent_dim", "base_channels", "lr", "diversity_weight", "diversity_cap", "batch", "phase2_samples"});
    auto& g = a.base.gan;
    get(c, q, "latent_dim", g.latent_dim);
    get(c, q, "base_channels", g.base_channels);
    get(c, q, "lr", g.lr);
    get(c, q, "diversity_weight", g.diversity_weight);
    get(c, q, "diversity_cap", g.diversity_cap);
    get(c, q, "batch", g.batch);
    get(c, q, "phase2_samples", g.phase2_samples);
  }
  if (n["gm"]) {
    const auto c = n["gm"];
    const std::string q = p + ".gm";
    check_map(c, q, {"epochs", "batch", "optimizer"});
    get(c, q, "epochs", a.base.gm.epochs);
    get(c, q, "batch", a.base.gm.batch);
    if (c["optimizer"]) read_optimizer(c["optimizer"], q + ".optimizer", a.base.gm.opt);
  }
  if (n["softtrain"]) {
    const auto c = n["softtrain"];
    check_map(c, p + ".softtrain", {"alpha"});
    get(c, p + ".softtrain", "alpha", a.base.soft.alpha);
  }
  if (n["surrogate"]) read_surrogate(n["surrogate"], p + ".surrogate", a.base.surrogate);
}

void read_eval(const YAML::Node& n, EvalSection& e) {
  check_map(n, "eval", {"adv", "mi"});
  if (n["adv"]) {
    const auto c = n["adv"];
    const std::string q = "eval.adv";
    check_map(c, q, {"enabled", "fgsm_eps", "pgd_eps", "pgd_iters", "pgd_step"});
    get(c, q, "enabled", e.adv);
    get(c, q, "fgsm_eps", e.adv_cfg.fgsm_eps);
    get(c, q, "pgd_eps", e.adv_cfg.pgd_eps);
    get(c, q, "pgd_iters", e.adv_cfg.pgd_iters);
    get(c, q, "pgd_step", e.adv_cfg.pgd_step);
  }
  if (n["mi"]) {
    const auto c = n["mi"];
    const std::string q = "eval.mi";
    check_map(c, q, {"enabled", "channels", "epochs", "batch", "lr", "probes"});
    get(c, q, "enabled", e.mi);
    get(c, q, "channels", e.mi_spec.channels);
    get(c, q, "epochs", e.mi_spec.epochs);
    get(c, q, "batch", e.mi_spec.batch);
    get(c, q, "lr", e.mi_spec.lr);
    get(c, q, "probes", e.mi_probes);
  }
}

// Shortest decimal that reads back to the same double.
std::string num(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  std::string s = buf;
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

void emit_optimizer(YAML::Emitter& y, const OptimizerConfig& o) {
  y << YAML::BeginMap;
  y << YAML::Key << "kind" << YAML::Value << (o.kind == OptimizerKind::SGD ? "sgd" : "adam");
  y << YAML::Key << "lr" << YAML::Value << num(o.lr);
  y << YAML::Key << "momentum" << YAML::Value << num(o.momentum);
  y << YAML::Key << "beta1" << YAML::Value << num(o.beta1);
  y << YAML::Key << "beta2" << YAML::Value << num(o.beta2);
  y << YAML::Key << "eps" << YAML::Value << num(o.eps);
  y << YAML::Key << "milestones" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (int m : o.milestones) y << m;
  y << YAML::EndSeq;
  y << YAML::Key << "gamma" << YAML::Value << num(o.gamma);
  y << YAML::EndMap;
}

void emit_augment(YAML::Emitter& y, const AugmentConfig& a) {
  y << YAML::BeginMap;
  y << YAML::Key << "enabled" << YAML::Value << a.enabled;
  y << YAML::Key << "flip_prob" << YAML::Value << num(a.flip_prob);
  y << YAML::Key << "max_rotation_deg" << YAML::Value << num(a.max_rotation_deg);
  y << YAML::EndMap;
}

// `with_run` adds the keys that do not change results (seeds, out,
// record_wallclock).
std::string emit(const ExperimentConfig& c, bool with_run) {
  YAML::Emitter y;
  y.SetBoolFormat(YAML::TrueFalseBool);
  y << YAML::BeginMap;
  if (with_run) {
    y << YAML::Key << "seeds" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (auto s : c.seeds) y << s;
    y << YAML::EndSeq;
    y << YAML::Key << "out" << YAML::Value << YAML::DoubleQuoted << c.out;
    y << YAML::Key << "record_wallclock" << YAML::Value << c.record_wallclock;
  }
  y << YAML::Key << "N" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (int n : c.Ns) y << n;
  y << YAML::EndSeq;

  y << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "preset" << YAML::Value << c.model.preset;
  y << YAML::Key << "units" << YAML::Value << YAML::BeginSeq;
  for (const auto& u : c.model.units) {
    y << YAML::Flow << YAML::BeginMap << YAML::Key << "type" << YAML::Value << unit_type(u.kind);
    if (u.has_params()) {
      y << YAML::Key << "in" << YAML::Value << u.in << YAML::Key << "out" << YAML::Value << u.out;
    }
    if (u.kind == UnitKind::Conv2d) {
      y << YAML::Key << "kernel" << YAML::Value << u.kernel << YAML::Key << "stride" << YAML::Value << u.stride
        << YAML::Key << "pad" << YAML::Value << u.pad;
    }
    y << YAML::EndMap;
  }
  y << YAML::EndSeq << YAML::EndMap;

  const auto& d = c.data;
  y << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "source" << YAML::Value << d.source;
  y << YAML::Key << "classes" << YAML::Value << d.classes;
  y << YAML::Key << "train_count" << YAML::Value << d.train_count;
  y << YAML::Key << "val_count" << YAML::Value << d.val_count;
  y << YAML::Key << "aux_count" << YAML::Value << d.aux_count;
  y << YAML::Key << "channels" << YAML::Value << d.channels;
  y << YAML::Key << "height" << YAML::Value << d.height;
  y << YAML::Key << "width" << YAML::Value << d.width;
  y << YAML::Key << "blobs_per_class" << YAML::Value << d.blobs_per_class;
  y << YAML::Key << "jitter" << YAML::Value << num(d.jitter);
  y << YAML::Key << "noise" << YAML::Value << num(d.noise);
  for (auto [k, v] : {std::pair{"train_images", &d.train_images}, {"train_labels", &d.train_labels},
                      {"val_images", &d.val_images}, {"val_labels", &d.val_labels}, {"aux_images", &d.aux_images}}) {
    y << YAML::Key << k << YAML::Value << YAML::DoubleQuoted << *v;
  }
  y << YAML::EndMap;

  const auto& t = c.training;
  y << YAML::Key << "training" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "mode" << YAML::Value << to_string(t.mode);
  y << YAML::Key << "clients" << YAML::Value << t.clients;
  y << YAML::Key << "partition" << YAML::Value << (t.partition == PartitionMode::IID ? "iid" : "class-limited");
  y << YAML::Key << "classes_per_client" << YAML::Value << t.classes_per_client;
  y << YAML::Key << "epochs" << YAML::Value << t.epochs;
  y << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  y << YAML::Key << "optimizer" << YAML::Value;
  emit_optimizer(y, t.opt);
  y << YAML::Key << "augment" << YAML::Value;
  emit_augment(y, t.augment);
  y << YAML::Key << "l1_lambda" << YAML::Value << num(t.l1_lambda);
  y << YAML::Key << "socket_transport" << YAML::Value << t.socket_transport;
  y << YAML::EndMap;

  const auto& a = c.attack;
  const auto& b = a.base;
  y << YAML::Key << "attack" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "methods" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto m : a.methods) y << to_string(m);
  y << YAML::EndSeq;
  y << YAML::Key << "variant" << YAML::Value << to_string(b.variant);
  y << YAML::Key << "budget" << YAML::Value << b.budget;
  y << YAML::Key << "budgets" << YAML::Value << YAML::BeginMap;
  for (const auto& [m, v] : a.budgets) y << YAML::Key << to_string(m) << YAML::Value << v;
  y << YAML::EndMap;
  y << YAML::Key << "data_fraction" << YAML::Value << num(a.data_fraction);
  y << YAML::Key << "stratified" << YAML::Value << a.stratified;
  y << YAML::Key << "launch_fraction" << YAML::Value << num(a.launch_fraction);
  y << YAML::Key << "late_k" << YAML::Value << a.late_k;
  y << YAML::Key << "query_chunk" << YAML::Value << b.query_chunk;
  y << YAML::Key << "craft" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "steps" << YAML::Value << b.craft.steps;
  y << YAML::Key << "lr" << YAML::Value << num(b.craft.lr);
  y << YAML::Key << "batch" << YAML::Value << b.craft.batch;
  y << YAML::EndMap;
  y << YAML::Key << "gan" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "latent_dim" << YAML::Value << b.gan.latent_dim;
  y << YAML::Key << "base_channels" << YAML::Value << b.gan.base_channels;
  y << YAML::Key << "lr" << YAML::Value << num(b.gan.lr);
  y << YAML::Key << "diversity_weight" << YAML::Value << num(b.gan.diversity_weight);
  y << YAML::Key << "diversity_cap" << YAML::Value << num(b.gan.diversity_cap);
  y << YAML::Key << "batch" << YAML::Value << b.gan.batch;
  y << YAML::Key << "phase2_samples" << YAML::Value << b.gan.phase2_samples;
  y << YAML::EndMap;
  y << YAML::Key << "gm" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "epochs" << YAML::Value << b.gm.epochs;
  y << YAML::Key << "batch" << YAML::Value << b.gm.batch;
  y << YAML::Key << "optimizer" << YAML::Value;
  emit_optimizer(y, b.gm.opt);
  y << YAML::EndMap;
  y << YAML::Key << "softtrain" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "alpha" << YAML::Value << num(b.soft.alpha);
  y << YAML::EndMap;
  const auto& s = b.surrogate;
  y << YAML::Key << "surrogate" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "epochs" << YAML::Value << s.epochs;
  y << YAML::Key << "batch_size" << YAML::Value << s.batch_size;
  y << YAML::Key << "optimizer" << YAML::Value;
  emit_optimizer(y, s.opt);
  y << YAML::Key << "augment" << YAML::Value;
  emit_augment(y, s.augment);
  y << YAML::Key << "hard_weight" << YAML::Value << num(s.hard_weight);
  y << YAML::Key << "soft_weight" << YAML::Value << num(s.soft_weight);
  y << YAML::EndMap;
  y << YAML::EndMap;

  const auto& e = c.eval;
  y << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "adv" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "enabled" << YAML::Value << e.adv;
  y << YAML::Key << "fgsm_eps" << YAML::Value << num(e.adv_cfg.fgsm_eps);
  y << YAML::Key << "pgd_eps" << YAML::Value << num(e.adv_cfg.pgd_eps);
  y << YAML::Key << "pgd_iters" << YAML::Value << e.adv_cfg.pgd_iters;
  y << YAML::Key << "pgd_step" << YAML::Value << num(e.adv_cfg.pgd_step);
  y << YAML::EndMap;
  y << YAML::Key << "mi" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "enabled" << YAML::Value << e.mi;
  y << YAML::Key << "channels" << YAML::Value << e.mi_spec.channels;
  y << YAML::Key << "epochs" << YAML::Value << e.mi_spec.epochs;
  y << YAML::Key << "batch" << YAML::Value << e.mi_spec.batch;
  y << YAML::Key << "lr" << YAML::Value << num(e.mi_spec.lr);
  y << YAML::Key << "probes" << YAML::Value << e.mi_probes;
  y << YAML::EndMap;
  y << YAML::EndMap;

  y << YAML::EndMap;
  return std::string(y.c_str()) + "\n";
}

}  // namespace

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.Ns = {1, 3, 5};
  c.seeds = {0, 1, 2};

  auto& a = c.attack;
  a.methods = {AttackMethod::Craft, AttackMethod::Gan, AttackMethod::Gm, AttackMethod::Train,
               AttackMethod::SoftTrain, AttackMethod::Naive};
  a.base.budget = 20000;
  a.budgets[AttackMethod::Gm] = 10000;
  a.base.gan.latent_dim = 8;
  a.base.gan.lr = 1e-3;
  a.base.gm.epochs = 30;
  auto& s = a.base.surrogate;
  s.epochs = 20;
  s.batch_size = 32;
  s.opt = OptimizerConfig::sgd(0.02, 0.9);
  s.opt.milestones = {6, 12, 16};
  s.opt.gamma = 0.2;

  c.eval.adv_cfg.pgd_eps = 0.1;
  c.eval.adv_cfg.pgd_step = 0.002;
  return c;
}

std::vector<UnitSpec> ExperimentConfig::units() const {
  return model.units.empty() ? preset_units(model.preset, data.classes) : model.units;
}

void ExperimentConfig::validate() const {
  require(!Ns.empty(), "N", "must not be empty");
  require(!seeds.empty(), "seeds", "must not be empty");
  std::vector<UnitSpec> us;
  try {
    us = units();
    infer_shapes(us, input_shape());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("model", e.what());
  }
  const int L = static_cast<int>(us.size());
  for (int n : Ns) require(n >= 1 && n <= L - 1, "N", "must be in [1, " + std::to_string(L - 1) + "], got " + std::to_string(n));
  require(data.source == "synthetic" || data.source == "idx", "data.source", "expected synthetic or idx");
  require(data.classes >= 2, "data.classes", "must be at least 2");
  require(data.channels >= 1 && data.height >= 4 && data.width >= 4, "data", "image must be at least 1x4x4");
  if (data.source == "synthetic") {
    require(data.train_count > 0, "data.train_count", "must be positive");
    require(data.val_count > 0, "data.val_count", "must be positive");
  } else {
    require(!data.train_images.empty(), "data.train_images", "required for idx data");
    require(!data.train_labels.empty(), "data.train_labels", "required for idx data");
    require(!data.val_images.empty(), "data.val_images", "required for idx data");
    require(!data.val_labels.empty(), "data.val_labels", "required for idx data");
  }
  require(training.clients >= 1, "training.clients", "must be positive");
  require(training.epochs >= 1, "training.epochs", "must be positive");
  require(training.batch_size >= 1, "training.batch_size", "must be positive");
  require(training.l1_lambda >= 0.0, "training.l1_lambda", "must be non-negative");
  if (training.partition == PartitionMode::ClassLimited) {
    require(training.classes_per_client >= 1 && training.classes_per_client <= data.classes,
            "training.classes_per_client", "must be in [1, classes]");
  }
  require(!attack.methods.empty(), "attack.methods", "must not be empty");
  require(attack.data_fraction > 0.0 && attack.data_fraction <= 1.0, "attack.data_fraction", "must be in (0, 1]");
  require(attack.launch_fraction >= 0.0 && attack.launch_fraction < 1.0, "attack.launch_fraction",
          "must be in [0, 1)");
  require(attack.base.query_chunk >= 1, "attack.query_chunk", "must be positive");
  require(attack.base.craft.steps >= 1, "attack.craft.steps", "must be positive");
  require(attack.base.craft.batch >= 1, "attack.craft.batch", "must be positive");
  require(attack.base.gan.batch >= 2 && attack.base.gan.batch % 2 == 0, "attack.gan.batch", "must be even and >= 2");
  require(attack.base.gan.latent_dim >= 1, "attack.gan.latent_dim", "must be positive");
  require(attack.base.gm.epochs >= 1, "attack.gm.epochs", "must be positive");
  require(attack.base.gm.batch >= 1, "attack.gm.batch", "must be positive");
  require(attack.base.soft.alpha > 0.0 && attack.base.soft.alpha <= 1.0, "attack.softtrain.alpha",
          "must be in (0, 1]");
  require(attack.base.surrogate.epochs >= 1, "attack.surrogate.epochs", "must be positive");
  require(attack.base.surrogate.batch_size >= 1, "attack.surrogate.batch_size", "must be positive");
  for (auto m : attack.methods) {
    if (m == AttackMethod::Train || m == AttackMethod::Naive) continue;
    require(budget(m) > 0, "attack.budget", "must be positive for " + to_string(m));
  }
  require(eval.adv_cfg.fgsm_eps >= 0.0 && eval.adv_cfg.pgd_eps >= 0.0, "eval.adv", "epsilons must be non-negative");
  require(eval.adv_cfg.pgd_iters >= 0, "eval.adv.pgd_iters", "must be non-negative");
  require(eval.mi_spec.epochs >= 1, "eval.mi.epochs", "must be positive");
  require(eval.mi_probes >= 1, "eval.mi.probes", "must be positive");
}

std::uint64_t ExperimentConfig::budget(AttackMethod m) const {
  const auto it = attack.budgets.find(m);
  return it == attack.budgets.end() ? attack.base.budget : it->second;
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("invalid YAML: ") + e.what());
  }
  ExperimentConfig c = default_config();
  if (!root || root.IsNull()) {
    c.validate();
    return c;
  }
  check_map(root, "", {"seed", "seeds", "N", "out", "record_wallclock", "model", "data", "training", "attack", "eval"});
  if (root["seed"] && root["seeds"]) throw ConfigError("seeds", "give either seed or seeds");
  if (root["seed"]) c.seeds = {scalar<std::uint64_t>(root["seed"], "seed")};
  if (root["seeds"]) c.seeds = scalar_or_list<std::uint64_t>(root["seeds"], "seeds");
  if (root["N"]) c.Ns = scalar_or_list<int>(root["N"], "N");
  get(root, "", "out", c.out);
  get(root, "", "record_wallclock", c.record_wallclock);
  if (root["model"]) read_model(root["model"], c.model);
  if (root["data"]) read_data(root["data"], c.data);
  if (root["training"]) read_training(root["training"], c.training);
  if (root["attack"]) read_attack(root["attack"], c.attack);
  if (root["eval"]) read_eval(root["eval"], c.eval);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string canonical_yaml(const ExperimentConfig& cfg) { return emit(cfg, true); }

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : emit(cfg, false)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sfl
