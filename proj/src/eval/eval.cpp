#include "sfl/eval/eval.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/nn/loss.hpp"
#include "sfl/nn/network.hpp"

namespace sfl {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (labels.empty()) throw Error("accuracy: empty dataset");
  if (predictions.size() != labels.size()) throw ShapeError("accuracy: prediction and label counts differ");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(labels.size());
}

double accuracy(const Model& m, const Dataset& d) {
  if (d.size() == 0) throw Error("accuracy: empty dataset");
  return accuracy(m.predict(d.images), d.labels);
}

double fidelity(std::span<const int> a, std::span<const int> b) {
  if (a.empty()) throw Error("fidelity: empty dataset");
  return accuracy(a, b);
}

double fidelity(const Model& a, const Model& b, const Tensor& x) {
  if (x.batch() == 0) throw Error("fidelity: empty dataset");
  return fidelity(a.predict(x), b.predict(x));
}

namespace {

Tensor input_grad(const Model& m, const Tensor& x, std::span<const int> labels) {
  const auto acts = forward<float>(m.units, m.params, x);
  const auto ce = cross_entropy(acts.back(), labels);
  return backward<float>(m.units, m.params, acts, ce.grad, BackwardOptions{false, true}).input;
}

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

}  // namespace

Tensor fgsm(const Model& m, const Tensor& x, std::span<const int> labels, double eps) {
  Tensor out = x;
  if (eps == 0.0 || x.batch() == 0) return out;
  const Tensor g = input_grad(m, x, labels);
  const auto e = static_cast<float>(eps);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(x[i] + e * sign(g[i]), 0.0f, 1.0f);
  return out;
}

Tensor pgd_targeted(const Model& m, const Tensor& x, std::span<const int> targets, double eps, double step,
                    int iters) {
  Tensor adv = x;
  if (eps == 0.0 || x.batch() == 0) return adv;
  const auto e = static_cast<float>(eps), s = static_cast<float>(step);
  for (int it = 0; it < iters; ++it) {
    const Tensor g = input_grad(m, adv, targets);
    for (std::size_t i = 0; i < adv.numel(); ++i) {
      const float v = adv[i] - s * sign(g[i]);
      adv[i] = std::clamp(std::clamp(v, x[i] - e, x[i] + e), 0.0f, 1.0f);
    }
  }
  return adv;
}

AdvResult adversarial_transfer(const Model& surrogate, const Model& victim, const Dataset& d, const AdvConfig& cfg) {
  if (cfg.fgsm_eps < 0.0) throw ConfigError("adv.fgsm_eps", "must be non-negative");
  if (cfg.pgd_eps < 0.0) throw ConfigError("adv.pgd_eps", "must be non-negative");
  if (cfg.pgd_iters < 0) throw ConfigError("adv.pgd_iters", "must be non-negative");
  if (d.n_classes < 2) throw Error("adversarial transfer: needs at least two classes");
  const auto pred = victim.predict(d.images);
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (pred[i] == d.labels[i]) ok.push_back(i);
  }
  AdvResult r;
  r.evaluated = ok.size();
  if (ok.empty()) return r;
  const Rng rng = Rng(cfg.seed).child("pgd-targets");
  std::size_t fg = 0, pg = 0;
  for (std::size_t b = 0; b < ok.size(); b += 256) {
    const std::span<const std::size_t> idx(ok.data() + b, std::min(ok.size(), b + 256) - b);
    const Tensor x = gather_rows(d.images, idx);
    std::vector<int> y, t;
    for (auto i : idx) {
      y.push_back(d.labels[i]);
      Rng ri = rng.child(i);
      const auto k = static_cast<int>(ri.below(static_cast<std::uint64_t>(d.n_classes - 1)));
      t.push_back(k >= d.labels[i] ? k + 1 : k);
    }
    const auto pf = victim.predict(fgsm(surrogate, x, y, cfg.fgsm_eps));
    const auto pp = victim.predict(pgd_targeted(surrogate, x, t, cfg.pgd_eps, cfg.step(), cfg.pgd_iters));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      fg += pf[i] != y[i] ? 1 : 0;
      pg += pp[i] == t[i] ? 1 : 0;
    }
  }
  const double n = static_cast<double>(ok.size());
  r.asr_fgsm = 100.0 * static_cast<double>(fg) / n;
  r.asr_pgd = 100.0 * static_cast<double>(pg) / n;
  return r;
}

Decoder make_inverter(const Shape& cut_shape, const Shape& image_shape, const InverterSpec& spec, Rng rng) {
  if (image_shape.size() != 3 || image_shape[1] % 4 != 0 || image_shape[2] % 4 != 0 || image_shape[1] == 0) {
    throw ShapeError("inverter: image shape " + to_string(image_shape) + " needs sides divisible by 4");
  }
  if (spec.channels < 2) throw ConfigError("mi.channels", "must be at least 2");
  const std::size_t h0 = image_shape[1] / 4, w0 = image_shape[2] / 4;
  const int c0 = spec.channels;
  std::vector<UnitSpec> head;
  if (cut_shape.size() == 3 && cut_shape[1] % h0 == 0 && cut_shape[2] % w0 == 0 &&
      cut_shape[1] / h0 == cut_shape[2] / w0) {
    const int s = static_cast<int>(cut_shape[1] / h0);
    head.push_back(UnitSpec::conv2d(static_cast<int>(cut_shape[0]), c0, s, s, 0));
  } else {
    head.push_back(UnitSpec::linear(static_cast<int>(numel_of(cut_shape)), c0 * static_cast<int>(h0 * w0)));
  }
  return make_upsampling_decoder(std::move(head), cut_shape, c0, image_shape, rng);
}

namespace {

Tensor lift(std::span<const UnitSpec> units, const ParamSet<float>& params, const Tensor& x) {
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < x.batch(); b += 512) {
    parts.push_back(forward_output<float>(units, params, slice_rows(x, b, std::min(x.batch(), b + 512))));
  }
  return concat_rows<float>(parts);
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

}  // namespace

double model_inversion(std::span<const UnitSpec> client_units, const ParamSet<float>& client, const Shape& input_shape,
                       const Tensor& attacker_images, const Tensor& probe_images, const InverterSpec& spec) {
  if (attacker_images.batch() == 0 || probe_images.batch() == 0) throw Error("model inversion: empty image set");
  if (attacker_images.sample_shape() != input_shape || probe_images.sample_shape() != input_shape) {
    throw ShapeError("model inversion: images do not match the client input shape " + to_string(input_shape));
  }
  if (spec.batch == 0) throw ConfigError("mi.batch", "must be positive");
  const Shape cut = infer_shapes(client_units, input_shape).back();
  const Rng rng = Rng(spec.seed).child("inverter");
  Decoder dec = make_inverter(cut, input_shape, spec, rng.child("init"));
  const Tensor acts = lift(client_units, client, attacker_images);
  Optimizer<float> oh(OptimizerConfig::adam(spec.lr)), ot(OptimizerConfig::adam(spec.lr));
  const std::size_t n = acts.batch();
  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.child("shuffle").child(static_cast<std::uint64_t>(epoch)).shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < n; b += spec.batch) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(n, b + spec.batch) - b);
      const Tensor target = gather_rows(attacker_images, idx);
      const auto pass = dec.run(gather_rows(acts, idx));
      Tensor d(target.dims());
      const float k = 2.0f / static_cast<float>(target.numel());
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] = k * (pass.output()[i] - target[i]);
      auto [gh, gt] = dec.backward(pass, d);
      oh.step(dec.head_params, gh);
      ot.step(dec.tail_params, gt);
    }
    if (!dec.head_params.all_finite() || !dec.tail_params.all_finite()) {
      throw DivergenceError("model inversion: decoder diverged at epoch " + std::to_string(epoch));
    }
  }
  const Tensor rec = dec.output(lift(client_units, client, probe_images));
  return mean_squared_error(rec, probe_images);
}

void MetricsRecord::validate() const {
  auto pct = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 100.0)) throw Error(std::string("metrics: ") + name + " outside [0, 100]");
  };
  pct(accuracy, "accuracy");
  pct(fidelity, "fidelity");
  if (asr_fgsm) pct(*asr_fgsm, "asr_fgsm");
  if (asr_pgd) pct(*asr_pgd, "asr_pgd");
  if (mi_mse && !(*mi_mse >= 0.0)) throw Error("metrics: mi_mse must be non-negative");
}

}  // namespace sfl
