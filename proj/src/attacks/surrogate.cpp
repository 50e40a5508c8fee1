#include "sfl/attacks/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/nn/loss.hpp"
#include "sfl/nn/network.hpp"

namespace sfl {

std::string to_string(ArchVariant v) {
  switch (v) {
    case ArchVariant::Same: return "same";
    case ArchVariant::Longer: return "longer";
    case ArchVariant::Shorter: return "shorter";
    case ArchVariant::Wider: return "wider";
    case ArchVariant::Thinner: return "thinner";
  }
  return "?";
}

ArchVariant parse_variant(const std::string& name) {
  for (auto v : {ArchVariant::Same, ArchVariant::Longer, ArchVariant::Shorter, ArchVariant::Wider,
                 ArchVariant::Thinner}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("attack.variant", "unknown surrogate variant '" + name + "'");
}

Shape VictimView::cut_shape() const { return infer_shapes(client_units(), input_shape).back(); }

VictimView victim_view(const SplitModel& victim) {
  VictimView v;
  v.units = victim.units;
  v.N = victim.N;
  v.input_shape = victim.input_shape;
  v.client = victim.client;
  v.n_classes = static_cast<int>(infer_shapes(victim.units, victim.input_shape).back().at(0));
  return v;
}

namespace {

// Re-derives every `in` field from the shape flowing into the unit.
std::vector<UnitSpec> fit_inputs(std::vector<UnitSpec> units, const Shape& input) {
  Shape cur = input;
  for (std::size_t i = 0; i < units.size(); ++i) {
    auto& u = units[i];
    if (u.kind == UnitKind::Linear) u.in = static_cast<int>(numel_of(cur));
    if (u.kind == UnitKind::Conv2d) u.in = static_cast<int>(cur.at(0));
    cur = output_shape(u, cur, static_cast<int>(i));
  }
  return units;
}

std::size_t last_param_unit(const std::vector<UnitSpec>& units) {
  for (std::size_t i = units.size(); i-- > 0;) {
    if (units[i].has_params()) return i;
  }
  throw ShapeError("surrogate: server part has no parametric unit");
}

}  // namespace

std::vector<UnitSpec> variant_server_units(std::span<const UnitSpec> server, const Shape& cut_shape, ArchVariant v) {
  std::vector<UnitSpec> units(server.begin(), server.end());
  const std::size_t out = last_param_unit(units);
  if (units[out].kind != UnitKind::Linear) throw ShapeError("surrogate: server must end in a Linear unit");
  switch (v) {
    case ArchVariant::Same: break;
    case ArchVariant::Longer: {
      const int h = units[out].in;
      units.insert(units.begin() + static_cast<std::ptrdiff_t>(out), {UnitSpec::linear(h, h), UnitSpec::relu()});
      break;
    }
    case ArchVariant::Shorter: {
      // Drop the hidden Linear (and its ReLU) that feeds the output layer.
      std::size_t prev = out;
      for (std::size_t i = out; i-- > 0;) {
        if (units[i].has_params()) {
          prev = i;
          break;
        }
      }
      if (prev == out || units[prev].kind != UnitKind::Linear) {
        throw ConfigError("attack.variant", "shorter surrogate needs a hidden Linear unit on the server");
      }
      units.erase(units.begin() + static_cast<std::ptrdiff_t>(prev),
                  units.begin() + static_cast<std::ptrdiff_t>(out));
      break;
    }
    case ArchVariant::Wider:
    case ArchVariant::Thinner: {
      bool any = false;
      for (std::size_t i = 0; i < out; ++i) {
        auto& u = units[i];
        if (u.kind != UnitKind::Linear && u.kind != UnitKind::Conv2d) continue;
        u.out = v == ArchVariant::Wider ? u.out * 2 : std::max(1, u.out / 2);
        any = true;
      }
      if (!any) throw ConfigError("attack.variant", to_string(v) + " surrogate needs a hidden layer on the server");
      break;
    }
  }
  units = fit_inputs(std::move(units), cut_shape);
  infer_shapes(units, cut_shape);
  return units;
}

SplitModel make_surrogate(const VictimView& v, ArchVariant variant, Rng rng) {
  SplitModel s;
  const auto cu = v.client_units();
  const auto su = variant_server_units(v.server_units(), v.cut_shape(), variant);
  s.units.assign(cu.begin(), cu.end());
  s.units.insert(s.units.end(), su.begin(), su.end());
  s.N = static_cast<int>(su.size());
  s.input_shape = v.input_shape;
  s.client = v.client;
  s.server = init_params(su, rng.child("server"));
  return s;
}

namespace {

struct FitData {
  const Tensor& x;
  std::span<const int> labels;
  const Tensor* soft;
};

// Minibatch loop shared by surrogate and naive training. `frozen` units run
// forward only; `trained` units get the optimizer.
void fit(std::span<const UnitSpec> frozen, const ParamSet<float>& frozen_params, std::span<const UnitSpec> trained,
         ParamSet<float>& params, const FitData& d, const SurrogateTrainingConfig& cfg) {
  const std::size_t n = d.x.batch();
  if (n == 0) throw Error("surrogate training: empty training set");
  if (d.labels.size() != n) throw ShapeError("surrogate training: label count differs from input count");
  if (cfg.batch_size == 0) throw Error("surrogate training: batch_size must be positive");
  if (d.soft && d.soft->batch() != n) throw ShapeError("surrogate training: soft target count differs");
  const Rng root = Rng(cfg.seed).child("surrogate");
  auto lift = [&](const Tensor& x) { return frozen.empty() ? x : forward_output<float>(frozen, frozen_params, x); };

  // Clean inputs through the frozen part once.
  Tensor clean;
  if (!cfg.augment.enabled || d.soft) {
    std::vector<Tensor> parts;
    for (std::size_t b = 0; b < n; b += 512) parts.push_back(lift(slice_rows(d.x, b, std::min(n, b + 512))));
    clean = concat_rows<float>(parts);
  }

  Optimizer<float> opt(cfg.opt);
  std::vector<std::size_t> order(n);
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_epoch(epoch);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    root.child("shuffle").child(static_cast<std::uint64_t>(epoch)).shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < n; b += cfg.batch_size, ++step) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(n, b + cfg.batch_size) - b);
      std::vector<int> y;
      for (auto i : idx) y.push_back(d.labels[i]);
      const Tensor hard_in = cfg.augment.enabled
                                 ? lift(augment(gather_rows(d.x, idx), cfg.augment, root.child("augment").child(step)))
                                 : gather_rows(clean, idx);
      const double hw = d.soft ? cfg.hard_weight : 1.0;
      auto acts = forward<float>(trained, params, hard_in);
      auto ce = cross_entropy(acts.back(), y);
      double loss = hw * ce.loss;
      for (auto& v : ce.grad.storage()) v = static_cast<float>(v * hw);
      auto g = backward<float>(trained, params, acts, ce.grad, BackwardOptions{true, false});
      if (d.soft) {
        acts = forward<float>(trained, params, gather_rows(clean, idx));
        auto sce = cross_entropy_soft(acts.back(), gather_rows(*d.soft, idx));
        loss += cfg.soft_weight * sce.loss;
        for (auto& v : sce.grad.storage()) v = static_cast<float>(v * cfg.soft_weight);
        const auto g2 = backward<float>(trained, params, acts, sce.grad, BackwardOptions{true, false});
        auto dst = g.params.tensors();
        const auto src = g2.params.tensors();
        for (std::size_t t = 0; t < dst.size(); ++t) {
          for (std::size_t e = 0; e < dst[t]->numel(); ++e) (*dst[t])[e] += (*src[t])[e];
        }
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError("surrogate training diverged at epoch " + std::to_string(epoch));
      }
      opt.step(params, g.params);
    }
  }
}

}  // namespace

void train_surrogate(SplitModel& s, const Tensor& x, std::span<const int> labels, const Tensor* soft,
                     const SurrogateTrainingConfig& cfg) {
  fit(s.client_units(), s.client, s.server_units(), s.server, {x, labels, soft}, cfg);
}

void train_full_model(Model& m, const Tensor& x, std::span<const int> labels, const SurrogateTrainingConfig& cfg) {
  fit({}, {}, m.units, m.params, {x, labels, nullptr}, cfg);
}

}  // namespace sfl
