#include "sfl/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/nn/loss.hpp"
#include "sfl/nn/second_order.hpp"
#include "common.hpp"

namespace sfl {

std::string to_string(AttackMethod m) {
  switch (m) {
    case AttackMethod::Craft: return "craft";
    case AttackMethod::Gan: return "gan";
    case AttackMethod::Gm: return "gm";
    case AttackMethod::Train: return "train";
    case AttackMethod::SoftTrain: return "softtrain";
    case AttackMethod::Naive: return "naive";
  }
  return "?";
}

AttackMethod parse_method(const std::string& name) {
  for (auto m : {AttackMethod::Craft, AttackMethod::Gan, AttackMethod::Gm, AttackMethod::Train,
                 AttackMethod::SoftTrain, AttackMethod::Naive}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("attack.method", "unknown attack '" + name + "'");
}

std::vector<double> compute_soft_labels(std::span<const std::vector<float>> e, int c, double alpha) {
  const std::size_t n = e.size();
  if (c < 0 || static_cast<std::size_t>(c) >= n) throw Error("soft labels: class index out of range");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("soft labels: alpha must lie in [0, 1]");
  auto dot = [](const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ShapeError("soft labels: gradient vectors differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
  };
  const double nc = std::sqrt(dot(e[c], e[c]));
  std::vector<double> cos(n, 0.0);
  double denom = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k == static_cast<std::size_t>(c)) continue;
    const double nk = std::sqrt(dot(e[k], e[k]));
    cos[k] = nc > 0.0 && nk > 0.0 ? dot(e[k], e[c]) / (nk * nc) : 0.0;
    denom += cos[k] + 1.0;
  }
  std::vector<double> q(n, 0.0);
  q[c] = alpha;
  double total = alpha;
  for (std::size_t k = 0; k < n; ++k) {
    if (k == static_cast<std::size_t>(c) || denom <= 0.0) continue;
    q[k] = std::max(0.0, (1.0 - alpha) * cos[k] / denom);
    total += q[k];
  }
  if (total > 0.0) {
    for (auto& v : q) v /= total;
  }
  return q;
}

Tensor per_sample_grads(const Tensor& batch_mean_grad) {
  Tensor out = batch_mean_grad;
  const auto b = static_cast<float>(out.batch());
  for (auto& v : out.storage()) v *= b;
  return out;
}

namespace detail {

Tensor lift(const VictimView& v, const Tensor& x) {
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < x.batch(); b += 512) {
    parts.push_back(forward_output<float>(v.client_units(), v.client, slice_rows(x, b, std::min(x.batch(), b + 512))));
  }
  return concat_rows<float>(parts);
}

std::vector<int> round_robin(std::size_t n, int classes, std::size_t offset) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>((offset + i) % static_cast<std::size_t>(classes));
  return y;
}

void check_api(const GradientQueryApi& api, const VictimView& v) {
  if (api.input_shape() != v.cut_shape()) {
    throw ShapeError("query API expects " + to_string(api.input_shape()) + " but the cut is " +
                     to_string(v.cut_shape()));
  }
}

// Rows i*classes + k hold input i with label k.
void sweep_rows(const Tensor& acts, std::size_t begin, std::size_t end, int classes, Tensor& rows,
                std::vector<int>& labels) {
  Shape dims = acts.dims();
  dims[0] = (end - begin) * static_cast<std::size_t>(classes);
  rows = Tensor(dims);
  labels.assign(dims[0], 0);
  const std::size_t w = acts.sample_numel();
  for (std::size_t i = begin; i < end; ++i) {
    for (int k = 0; k < classes; ++k) {
      const std::size_t r = (i - begin) * static_cast<std::size_t>(classes) + static_cast<std::size_t>(k);
      std::copy_n(acts.data() + i * w, w, rows.data() + r * w);
      labels[r] = k;
    }
  }
}

}  // namespace detail

using namespace detail;

Tensor craft_inputs(GradientQueryApi& api, const VictimView& v, Tensor x, std::span<const int> labels,
                    const CraftConfig& cfg) {
  check_api(api, v);
  Optimizer<float> adam(OptimizerConfig::adam(cfg.lr));
  for (int t = 0; t < cfg.steps; ++t) {
    const auto acts = forward<float>(v.client_units(), v.client, x);
    const Tensor g = api.gradient_query(acts.back(), labels);
    const auto gx = backward<float>(v.client_units(), v.client, acts, g, BackwardOptions{false, true});
    if (!gx.input.all_finite()) throw DivergenceError("craft: non-finite input gradient");
    adam.begin_step();
    adam.step_tensor(0, x.span(), gx.input.span());
    for (auto& p : x.storage()) p = std::clamp(p, 0.0f, 1.0f);
  }
  return x;
}

AttackResult craft_me(GradientQueryApi& api, const VictimView& v, const AttackConfig& cfg) {
  if (cfg.craft.steps < 1) throw ConfigError("attack.craft.steps", "must be positive");
  if (cfg.budget < static_cast<std::uint64_t>(cfg.craft.steps)) {
    throw ConfigError("attack.budget", "craft needs at least one query per crafting step");
  }
  const std::size_t n = cfg.budget / static_cast<std::uint64_t>(cfg.craft.steps);
  const std::size_t chunk = std::max<std::size_t>(1, cfg.craft.batch);
  const Rng rng = Rng(cfg.seed).child("craft");
  const std::vector<int> labels = round_robin(n, v.n_classes);
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    Tensor x0 = uniform_noise(e - b, v.input_shape, rng.child("noise").child(b));
    parts.push_back(craft_inputs(api, v, std::move(x0), std::span(labels).subspan(b, e - b), cfg.craft));
  }
  const Tensor crafted = concat_rows<float>(parts);

  AttackResult r;
  r.method = AttackMethod::Craft;
  r.budget = cfg.budget;
  r.queries_used = n * static_cast<std::uint64_t>(cfg.craft.steps);
  r.training_samples = n;
  r.surrogate = make_surrogate(v, cfg.variant, Rng(cfg.seed).child("surrogate-init"));
  train_surrogate(r.surrogate, crafted, labels, nullptr, cfg.surrogate);
  return r;
}

Tensor Generator::input(const Tensor& z, std::span<const int> labels) const {
  if (z.rank() != 2 || z.dim(1) != static_cast<std::size_t>(latent_dim) || labels.size() != z.batch()) {
    throw ShapeError("generator: latent batch has shape " + to_string(z.dims()));
  }
  const std::size_t w = static_cast<std::size_t>(latent_dim + n_classes);
  Tensor in({z.batch(), w});
  for (std::size_t i = 0; i < z.batch(); ++i) {
    std::copy_n(z.data() + i * static_cast<std::size_t>(latent_dim), latent_dim, in.data() + i * w);
    if (labels[i] < 0 || labels[i] >= n_classes) throw Error("generator: label out of range");
    in[i * w + static_cast<std::size_t>(latent_dim + labels[i])] = 1.0f;
  }
  return in;
}

Generator make_generator(const Shape& image_shape, int n_classes, const GeneratorConfig& cfg, Rng rng) {
  if (cfg.latent_dim < 1) throw ConfigError("attack.gan.latent_dim", "must be positive");
  if (cfg.base_channels < 2) throw ConfigError("attack.gan.base_channels", "must be at least 2");
  if (image_shape.size() != 3 || image_shape[1] % 4 != 0 || image_shape[2] % 4 != 0) {
    throw ShapeError("generator: image shape " + to_string(image_shape) + " needs height and width divisible by 4");
  }
  Generator g;
  g.latent_dim = cfg.latent_dim;
  g.n_classes = n_classes;
  g.output_shape = image_shape;
  const int in = cfg.latent_dim + n_classes;
  const int seed = cfg.base_channels * static_cast<int>(image_shape[1] / 4 * (image_shape[2] / 4));
  g.net = make_upsampling_decoder({UnitSpec::linear(in, seed), UnitSpec::relu()}, {static_cast<std::size_t>(in)},
                                  cfg.base_channels, image_shape, rng);
  return g;
}

double diversity_loss(const Tensor& images, const Tensor& z, double cap, Tensor& grad) {
  if (images.batch() != z.batch() || images.batch() % 2 != 0) {
    throw ShapeError("diversity loss: needs an even batch of matching images and latents");
  }
  grad = Tensor(images.dims());
  const std::size_t pairs = images.batch() / 2;
  if (pairs == 0) return 0.0;
  const std::size_t ni = images.sample_numel(), nz = z.sample_numel();
  double loss = 0.0;
  for (std::size_t j = 0; j < pairs; ++j) {
    const auto g1 = images.row(2 * j), g2 = images.row(2 * j + 1);
    const auto z1 = z.row(2 * j), z2 = z.row(2 * j + 1);
    double dg = 0.0, dz = 0.0;
    for (std::size_t e = 0; e < ni; ++e) dg += std::abs(static_cast<double>(g1[e]) - g2[e]);
    for (std::size_t e = 0; e < nz; ++e) dz += std::abs(static_cast<double>(z1[e]) - z2[e]);
    if (dz <= 0.0) continue;
    const double r = dg / dz;
    loss -= std::min(r, cap);
    if (r >= cap) continue;
    const double scale = -1.0 / (static_cast<double>(pairs) * dz);
    auto d1 = grad.row(2 * j), d2 = grad.row(2 * j + 1);
    for (std::size_t e = 0; e < ni; ++e) {
      const double diff = static_cast<double>(g1[e]) - g2[e];
      const double s = diff > 0.0 ? scale : (diff < 0.0 ? -scale : 0.0);
      d1[e] = static_cast<float>(s);
      d2[e] = static_cast<float>(-s);
    }
  }
  return loss / static_cast<double>(pairs);
}

namespace detail {

Tensor latent_batch(std::size_t n, int dim, Rng rng) {
  Tensor z({n, static_cast<std::size_t>(dim)});
  for (auto& v : z.storage()) v = static_cast<float>(rng.normal());
  return z;
}

// Pair j of a generator batch shares class (offset + j) mod classes.
std::vector<int> paired_labels(std::size_t batch, int classes, std::uint64_t offset) {
  std::vector<int> y(batch);
  for (std::size_t i = 0; i < batch; ++i) y[i] = static_cast<int>((offset + i / 2) % static_cast<std::uint64_t>(classes));
  return y;
}

void generator_step(Generator& g, Optimizer<float>& oh, Optimizer<float>& ot, const Decoder::Pass& p,
                    const Tensor& z, const Tensor& image_grad, const GeneratorConfig& cfg) {
  Tensor dgrad;
  diversity_loss(p.output(), z, cfg.diversity_cap, dgrad);
  Tensor up = image_grad;
  const auto w = static_cast<float>(cfg.diversity_weight);
  for (std::size_t i = 0; i < up.numel(); ++i) up[i] += w * dgrad[i];
  auto [gh, gt] = g.net.backward(p, up);
  if (!gh.all_finite() || !gt.all_finite()) throw DivergenceError("generator training diverged: non-finite gradient");
  oh.step(g.net.head_params, gh);
  ot.step(g.net.tail_params, gt);
  if (!g.net.head_params.all_finite() || !g.net.tail_params.all_finite()) {
    throw DivergenceError("generator training diverged: non-finite parameters");
  }
}

AttackResult gan_phase2(const Generator& g, const VictimView& v, const AttackConfig& cfg, AttackMethod method) {
  const std::size_t n = cfg.gan.phase2_samples;
  if (n == 0) throw ConfigError("attack.gan.phase2_samples", "must be positive");
  const Rng rng = Rng(cfg.seed).child("gan-phase2");
  const std::vector<int> labels = round_robin(n, v.n_classes);
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < n; b += 256) {
    const std::size_t e = std::min(n, b + 256);
    parts.push_back(
        g.generate(latent_batch(e - b, g.latent_dim, rng.child(b)), std::span(labels).subspan(b, e - b)));
  }
  AttackResult r;
  r.method = method;
  r.training_samples = n;
  r.surrogate = make_surrogate(v, cfg.variant, Rng(cfg.seed).child("surrogate-init"));
  train_surrogate(r.surrogate, concat_rows<float>(parts), labels, nullptr, cfg.surrogate);
  return r;
}

}  // namespace detail

AttackResult gan_me(GradientQueryApi& api, const VictimView& v, const AttackConfig& cfg) {
  check_api(api, v);
  const std::size_t b = cfg.gan.batch - cfg.gan.batch % 2;
  if (b == 0) throw ConfigError("attack.gan.batch", "must be at least 2");
  const std::uint64_t iters = cfg.budget / b;
  if (iters == 0) throw ConfigError("attack.budget", "smaller than one generator batch");
  const Rng rng = Rng(cfg.seed).child("gan");
  Generator g = make_generator(v.input_shape, v.n_classes, cfg.gan, rng.child("init"));
  Optimizer<float> oh(OptimizerConfig::adam(cfg.gan.lr)), ot(OptimizerConfig::adam(cfg.gan.lr));
  for (std::uint64_t it = 0; it < iters; ++it) {
    const Tensor z = latent_batch(b, g.latent_dim, rng.child("z").child(it));
    const auto y = paired_labels(b, v.n_classes, it * (b / 2));
    const auto p = g.run(z, y);
    const auto acts = forward<float>(v.client_units(), v.client, p.output());
    const Tensor dA = api.gradient_query(acts.back(), y);
    const auto gx = backward<float>(v.client_units(), v.client, acts, dA, BackwardOptions{false, true});
    generator_step(g, oh, ot, p, z, gx.input, cfg.gan);
  }
  AttackResult r = gan_phase2(g, v, cfg, AttackMethod::Gan);
  r.budget = cfg.budget;
  r.queries_used = iters * b;
  return r;
}

void gm_fit(SplitModel& s, const Tensor& activations, std::span<const int> labels, const Tensor& targets,
            const GmConfig& cfg, Rng rng) {
  const std::size_t n = activations.batch();
  if (n == 0) throw Error("gradient matching: no records");
  if (labels.size() != n || targets.dims() != activations.dims()) {
    throw ShapeError("gradient matching: activations, labels and targets are not aligned");
  }
  if (cfg.batch == 0) throw ConfigError("attack.gm.batch", "must be positive");
  const auto units = s.server_units();
  check_second_order_support(units);
  Optimizer<float> opt(cfg.opt);
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_epoch(epoch);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.child("shuffle").child(static_cast<std::uint64_t>(epoch)).shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < n; b += cfg.batch) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(n, b + cfg.batch) - b);
      const float m = static_cast<float>(idx.size());
      std::vector<int> y;
      for (auto i : idx) y.push_back(labels[i]);
      // The pass differentiates the batch-mean CE, whose input gradient is the
      // per-sample one divided by the batch size.
      Tensor t = gather_rows(targets, idx);
      for (auto& v : t.storage()) v /= m;
      auto r = second_order_input_grad_backward<float>(units, s.server, gather_rows(activations, idx), y, t);
      if (!std::isfinite(r.loss)) throw DivergenceError("gradient matching diverged at epoch " + std::to_string(epoch));
      // Rescale to the mean per-sample squared error.
      r.grads.for_each([&](Tensor& g) {
        for (auto& v : g.storage()) v *= m;
      });
      opt.step(s.server, r.grads);
    }
  }
  if (!s.server.all_finite()) throw DivergenceError("gradient matching produced non-finite parameters");
}

AttackResult gm_me(GradientQueryApi& api, const VictimView& v, const Tensor& aux_inputs, const AttackConfig& cfg) {
  check_api(api, v);
  const auto classes = static_cast<std::uint64_t>(v.n_classes);
  const std::size_t n = std::min<std::size_t>(aux_inputs.batch(), cfg.budget / classes);
  if (n == 0) throw ConfigError("attack.budget", "gradient matching needs at least N_C queries and one aux input");
  const Tensor acts = lift(v, slice_rows(aux_inputs, 0, n));
  const std::size_t chunk = std::max<std::size_t>(1, cfg.query_chunk);
  std::vector<Tensor> rows, targets;
  std::vector<int> labels;
  for (std::size_t b = 0; b < n; b += chunk) {
    Tensor a;
    std::vector<int> y;
    sweep_rows(acts, b, std::min(n, b + chunk), v.n_classes, a, y);
    targets.push_back(per_sample_grads(api.gradient_query(a, y)));
    rows.push_back(std::move(a));
    labels.insert(labels.end(), y.begin(), y.end());
  }
  AttackResult r;
  r.method = AttackMethod::Gm;
  r.budget = cfg.budget;
  r.queries_used = n * classes;
  r.training_samples = labels.size();
  r.surrogate = make_surrogate(v, cfg.variant, Rng(cfg.seed).child("surrogate-init"));
  gm_fit(r.surrogate, concat_rows<float>(rows), labels, concat_rows<float>(targets), cfg.gm,
         Rng(cfg.seed).child("gm"));
  return r;
}

AttackResult softtrain_me(GradientQueryApi& api, const VictimView& v, const Dataset& subset, const AttackConfig& cfg) {
  check_api(api, v);
  const auto classes = static_cast<std::size_t>(v.n_classes);
  const std::size_t n = std::min<std::size_t>(subset.size(), cfg.budget / classes);
  if (n == 0) throw ConfigError("attack.budget", "softtrain needs at least N_C queries and one sample");
  const Tensor x = slice_rows(subset.images, 0, n);
  const std::vector<int> y(subset.labels.begin(), subset.labels.begin() + static_cast<std::ptrdiff_t>(n));
  const Tensor acts = lift(v, x);
  const std::size_t chunk = std::max<std::size_t>(1, cfg.query_chunk);
  Tensor soft({n, classes});
  for (std::size_t b = 0; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    Tensor a;
    std::vector<int> ky;
    sweep_rows(acts, b, e, v.n_classes, a, ky);
    const Tensor g = api.gradient_query(a, ky);
    for (std::size_t i = b; i < e; ++i) {
      std::vector<std::vector<float>> ev;
      for (std::size_t k = 0; k < classes; ++k) {
        const auto row = g.row((i - b) * classes + k);
        ev.emplace_back(row.begin(), row.end());
      }
      const auto q = compute_soft_labels(ev, y[i], cfg.soft.alpha);
      for (std::size_t k = 0; k < classes; ++k) soft[i * classes + k] = static_cast<float>(q[k]);
    }
  }
  AttackResult r;
  r.method = AttackMethod::SoftTrain;
  r.budget = cfg.budget;
  r.queries_used = n * classes;
  r.training_samples = n;
  r.surrogate = make_surrogate(v, cfg.variant, Rng(cfg.seed).child("surrogate-init"));
  train_surrogate(r.surrogate, x, y, &soft, cfg.surrogate);
  return r;
}

AttackResult train_me(const VictimView& v, const Dataset& subset, const AttackConfig& cfg) {
  AttackResult r;
  r.method = AttackMethod::Train;
  r.budget = cfg.budget;
  r.training_samples = subset.size();
  r.surrogate = make_surrogate(v, cfg.variant, Rng(cfg.seed).child("surrogate-init"));
  train_surrogate(r.surrogate, subset.images, subset.labels, nullptr, cfg.surrogate);
  return r;
}

AttackResult naive_baseline(const std::vector<UnitSpec>& units, const Shape& input_shape, int N,
                            const Dataset& subset, const AttackConfig& cfg) {
  Model m = make_model(units, input_shape, Rng(cfg.seed).child("naive-init"));
  train_full_model(m, subset.images, subset.labels, cfg.surrogate);
  AttackResult r;
  r.method = AttackMethod::Naive;
  r.budget = cfg.budget;
  r.training_samples = subset.size();
  r.surrogate = split(m, N);
  return r;
}

}  // namespace sfl
