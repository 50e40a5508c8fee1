#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "sfl/attacks/attacks.hpp"
#include "sfl/core/presets.hpp"
#include "sfl/eval/eval.hpp"
#include "sfl/nn/loss.hpp"
#include "sfl/nn/second_order.hpp"

using namespace sfl;

namespace {

struct Fixture {
  Dataset train, val;
  Tensor aux;
  Model victim;
};

// A desk victim trained centrally for a few epochs; shared by the tests.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    SyntheticSpec s;
    s.count = 1500;
    s.seed = 11;
    s.prototype_seed = 1;
    x.train = synthesize(s);
    s.count = 500;
    s.seed = 12;
    x.val = synthesize(s);
    s.count = 600;
    s.seed = 13;
    s.prototype_seed = 2;
    x.aux = synthesize(s).images;
    x.victim = make_model(desk_victim_units(), desk_input_shape(), Rng(3));
    SurrogateTrainingConfig c;
    c.epochs = 6;
    c.batch_size = 32;
    c.opt = OptimizerConfig::sgd(0.05, 0.9);
    c.augment.enabled = false;
    train_full_model(x.victim, x.train.images, x.train.labels, c);
    return x;
  }();
  return f;
}

FrozenServerOracle oracle_for(const SplitModel& s, std::uint64_t budget) {
  return FrozenServerOracle({s.server_units().begin(), s.server_units().end()}, s.server, s.cut_shape(), budget);
}

// Forwards to the oracle and records what it is asked.
class Recorder final : public GradientQueryApi {
 public:
  Recorder(GradientQueryApi& inner, const SplitModel& victim) : inner_(inner), victim_(victim) {}
  Tensor gradient_query(const Tensor& A, std::span<const int> labels) override {
    batches.emplace_back(labels.begin(), labels.end());
    const auto logits = forward_output<float>(victim_.server_units(), victim_.server, A);
    ce.push_back(cross_entropy(logits, labels).loss);
    return inner_.gradient_query(A, labels);
  }
  Shape input_shape() const override { return inner_.input_shape(); }
  int n_classes() const override { return inner_.n_classes(); }

  std::vector<std::vector<int>> batches;
  std::vector<double> ce;

 private:
  GradientQueryApi& inner_;
  const SplitModel& victim_;
};

AttackConfig quick_config() {
  AttackConfig c;
  c.surrogate.epochs = 4;
  c.surrogate.batch_size = 32;
  c.surrogate.opt.milestones = {};
  c.gm.epochs = 10;
  return c;
}

std::vector<std::vector<float>> unit_vectors(int n) {
  std::vector<std::vector<float>> e(static_cast<std::size_t>(n), std::vector<float>(static_cast<std::size_t>(n), 0.0f));
  for (int k = 0; k < n; ++k) e[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = 1.0f;
  return e;
}

}  // namespace

TEST_CASE("soft labels: orthogonal gradients give a one-hot vector") {
  const auto e = unit_vectors(10);
  const auto q = compute_soft_labels(e, 4, 0.9);
  for (int k = 0; k < 10; ++k) CHECK(q[static_cast<std::size_t>(k)] == (k == 4 ? 1.0 : 0.0));
}

TEST_CASE("soft labels: one gradient equal to the true-label gradient") {
  auto e = unit_vectors(10);
  e[7] = e[2];
  const auto q = compute_soft_labels(e, 2, 0.9);
  // raw tail 0.1 * 1 / (2 + 8) = 0.01, q_c = 0.9, renormalized by 0.91
  CHECK(q[2] == doctest::Approx(0.9 / 0.91).epsilon(1e-12));
  CHECK(q[7] == doctest::Approx(0.01 / 0.91).epsilon(1e-12));
  CHECK(q[2] == doctest::Approx(0.989).epsilon(1e-3));
  CHECK(q[7] == doctest::Approx(0.011).epsilon(2e-2));
  for (int k : {0, 1, 3, 4, 5, 6, 8, 9}) CHECK(q[static_cast<std::size_t>(k)] == 0.0);
}

TEST_CASE("soft labels: zero-norm gradients count as orthogonal") {
  auto e = unit_vectors(5);
  e[1].assign(5, 0.0f);
  auto q = compute_soft_labels(e, 0, 0.9);
  CHECK(q[0] == 1.0);
  e[0].assign(5, 0.0f);
  q = compute_soft_labels(e, 0, 0.9);
  CHECK(q[0] == 1.0);
}

TEST_CASE("soft labels are distributions over 10k random draws") {
  Rng rng(77);
  for (int t = 0; t < 10000; ++t) {
    const int classes = 2 + static_cast<int>(rng.below(11));
    const std::size_t dim = 1 + rng.below(20);
    std::vector<std::vector<float>> e(static_cast<std::size_t>(classes), std::vector<float>(dim));
    for (auto& v : e) {
      const bool zero = rng.uniform(0.0, 1.0) < 0.05;
      for (auto& x : v) x = zero ? 0.0f : static_cast<float>(rng.normal());
    }
    const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    const double alpha = rng.uniform(0.01, 1.0);
    const auto q = compute_soft_labels(e, c, alpha);
    REQUIRE(q.size() == static_cast<std::size_t>(classes));
    double sum = 0.0;
    for (double v : q) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("Craft-ME: image count, class balance and query accounting") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 3);
  auto api = oracle_for(v, 1000);
  Recorder rec(api, v);
  auto cfg = quick_config();
  cfg.method = AttackMethod::Craft;
  cfg.budget = 1000;
  const auto r = craft_me(rec, victim_view(v), cfg);
  CHECK(r.training_samples == 50);
  CHECK(r.queries_used == 1000);
  CHECK(api.queries_used() <= 1000);
  std::map<int, int> counts;
  for (int y : rec.batches.front()) ++counts[y];
  CHECK(rec.batches.front().size() == 50);
  int lo = 1 << 30, hi = 0;
  for (int k = 0; k < 10; ++k) {
    lo = std::min(lo, counts[k]);
    hi = std::max(hi, counts[k]);
  }
  CHECK(hi - lo <= 1);
  CHECK(r.surrogate.client.bit_equal(v.client));

  cfg.budget = 19;
  auto small = oracle_for(v, 19);
  CHECK_THROWS_AS(craft_me(small, victim_view(v), cfg), ConfigError);
}

TEST_CASE("Craft-ME: crafting lowers the loss on a frozen server") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 5);
  auto api = oracle_for(v, 100000);
  const Tensor x0 = uniform_noise(40, desk_input_shape(), Rng(5));
  std::vector<int> y(40);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);
  CraftConfig cc;
  const Tensor x1 = craft_inputs(api, victim_view(v), x0, y, cc);
  const auto before = per_sample_cross_entropy(f.victim.logits(x0), y);
  const auto after = per_sample_cross_entropy(f.victim.logits(x1), y);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(after[i] <= before[i] + 1e-6);
  CHECK(api.queries_used() == 40u * 20u);
  for (float p : x1.span()) REQUIRE((p >= 0.0f && p <= 1.0f));
}

TEST_CASE("GAN-ME: generator output shape, progress and budget") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 3);
  auto api = oracle_for(v, 6400);
  Recorder rec(api, v);
  auto cfg = quick_config();
  cfg.method = AttackMethod::Gan;
  cfg.budget = 6400;
  cfg.gan.latent_dim = 8;
  cfg.gan.lr = 1e-3;
  cfg.gan.phase2_samples = 500;
  const auto r = gan_me(rec, victim_view(v), cfg);
  CHECK(r.queries_used == 6400);
  CHECK(r.training_samples == 500);
  REQUIRE(rec.ce.size() == 100);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += rec.ce[i];
    last += rec.ce[rec.ce.size() - 1 - i];
  }
  CHECK(last < first);

  const Generator g = make_generator(desk_input_shape(), 10, cfg.gan, Rng(1));
  CHECK(g.generate(Tensor({2, 8}), std::vector<int>{0, 1}).sample_shape() == desk_input_shape());
}

TEST_CASE("diversity term keeps distinct latents apart") {
  GeneratorConfig gc;
  gc.latent_dim = 8;
  gc.lr = 1e-3;
  Generator g = make_generator(desk_input_shape(), 10, gc, Rng(2));
  Optimizer<float> oh(OptimizerConfig::adam(gc.lr)), ot(OptimizerConfig::adam(gc.lr));
  // Pressure toward one fixed image for every class; only the diversity
  // term resists collapse.
  const Tensor target = uniform_noise(1, desk_input_shape(), Rng(9));
  for (int it = 0; it < 200; ++it) {
    Tensor z({16, 8});
    Rng r = Rng(3).child(static_cast<std::uint64_t>(it));
    for (auto& e : z.storage()) e = static_cast<float>(r.normal());
    std::vector<int> y(16);
    for (std::size_t i = 0; i < 16; ++i) y[i] = static_cast<int>(i / 2 % 10);
    const auto p = g.run(z, y);
    Tensor grad;
    diversity_loss(p.output(), z, gc.diversity_cap, grad);
    const auto& out = p.output();
    for (std::size_t i = 0; i < grad.numel(); ++i) {
      grad[i] = static_cast<float>(gc.diversity_weight) * grad[i] +
                2.0f * (out[i] - target[i % target.numel()]) / static_cast<float>(out.numel());
    }
    auto [gh, gt] = g.net.backward(p, grad);
    oh.step(g.net.head_params, gh);
    ot.step(g.net.tail_params, gt);
  }
  Tensor z({2, 8});
  Rng r(99);
  for (auto& e : z.storage()) e = static_cast<float>(r.normal());
  const Tensor img = g.generate(z, std::vector<int>{4, 4});
  double dist = 0.0;
  for (std::size_t i = 0; i < img.sample_numel(); ++i) dist += std::abs(img.row(0)[i] - img.row(1)[i]);
  CHECK(dist > 0.0);

  Tensor same({2, 8});
  Tensor images({2, 1, 2, 2});
  images[0] = 1.0f;
  Tensor grad;
  CHECK(diversity_loss(images, same, 1.0, grad) == 0.0);
  CHECK_THROWS_AS(diversity_loss(Tensor({3, 1, 2, 2}), Tensor({3, 8}), 1.0, grad), ShapeError);
}

TEST_CASE("GM-ME: zero loss and no update at the victim's weights") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 3);
  auto api = oracle_for(v, 100000);
  const Tensor x = slice_rows(f.aux, 0, 32);
  const Tensor acts = forward_output<float>(v.client_units(), v.client, x);
  std::vector<int> y(32);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);
  // Query and fit batches are powers of two so rescaling is exact.
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < 32; b += 16) {
    parts.push_back(per_sample_grads(
        api.gradient_query(slice_rows(acts, b, b + 16), std::span<const int>(y).subspan(b, 16))));
  }
  const Tensor targets = concat_rows<float>(parts);
  for (std::size_t b = 0; b < 32; b += 8) {
    const Tensor t8 = slice_rows(targets, b, b + 8);
    Tensor scaled = t8;
    for (auto& e : scaled.storage()) e /= 8.0f;
    CHECK(gradient_match_loss<float>(v.server_units(), v.server, slice_rows(acts, b, b + 8),
                                     std::span<const int>(y).subspan(b, 8), scaled) == 0.0);
  }
  SplitModel s = v;
  GmConfig gc;
  gc.epochs = 3;
  gc.batch = 8;
  gm_fit(s, acts, y, targets, gc, Rng(4));
  CHECK(s.server.bit_equal(v.server));
}

TEST_CASE("GM-ME: query accounting and linear-server recovery") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 1);
  auto cfg = quick_config();
  cfg.method = AttackMethod::Gm;
  cfg.budget = 100000;
  {
    auto api = oracle_for(v, cfg.budget);
    const auto r = gm_me(api, victim_view(v), slice_rows(f.aux, 0, 100), cfg);
    CHECK(r.queries_used == 1000);
    CHECK(api.queries_used() == 1000);
  }
  cfg.budget = 5000;
  cfg.gm.epochs = 30;
  auto api = oracle_for(v, cfg.budget);
  const auto r = gm_me(api, victim_view(v), f.aux, cfg);
  CHECK(r.queries_used <= 5000);
  CHECK(fidelity(r.surrogate.join(), f.victim, f.val.images) >= 99.0);
}

TEST_CASE("GM objective has the victim as its strict minimum on a Linear server") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 1);
  const Tensor acts = forward_output<float>(v.client_units(), v.client, slice_rows(f.aux, 0, 8));
  const std::vector<int> y = {0, 1, 2, 3, 4, 5, 6, 7};
  const auto ce = cross_entropy(forward_output<float>(v.server_units(), v.server, acts), y);
  const auto g = backward<float>(v.server_units(), v.server, forward<float>(v.server_units(), v.server, acts), ce.grad,
                                 BackwardOptions{false, true});
  CHECK(gradient_match_loss<float>(v.server_units(), v.server, acts, y, g.input) == 0.0);
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    auto p = v.server;
    auto& w = p.layers[0].weight;
    w[rng.below(w.numel())] += (t % 2 ? 1.0f : -1.0f) * 0.01f;
    CHECK(gradient_match_loss<float>(v.server_units(), p, acts, y, g.input) > 0.0);
  }
}

TEST_CASE("SoftTrain-ME, Train-ME and the naive baseline") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 3);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < 60; ++i) idx.push_back(i * 7);
  const Dataset subset = f.train.subset(idx);
  auto cfg = quick_config();
  CHECK(cfg.soft.alpha == 0.9);
  CHECK(SurrogateTrainingConfig{}.opt.lr == 0.02);

  cfg.method = AttackMethod::SoftTrain;
  cfg.budget = 10000;
  auto api = oracle_for(v, cfg.budget);
  const auto s = softtrain_me(api, victim_view(v), subset, cfg);
  CHECK(s.queries_used == 600);
  CHECK(api.queries_used() == 600);
  CHECK(s.surrogate.client.bit_equal(v.client));

  cfg.method = AttackMethod::Train;
  const auto t = train_me(victim_view(v), subset, cfg);
  CHECK(t.queries_used == 0);
  CHECK(t.surrogate.client.bit_equal(v.client));
  CHECK_FALSE(t.surrogate.server.bit_equal(v.server));

  cfg.method = AttackMethod::Naive;
  const auto n = naive_baseline(f.victim.units, f.victim.input_shape, 3, subset, cfg);
  CHECK(n.queries_used == 0);
  CHECK_FALSE(n.surrogate.client.bit_equal(v.client));
  CHECK(n.surrogate.units == f.victim.units);

  CHECK_THROWS(train_me(victim_view(v), Dataset{Tensor({0, 1, 12, 12}), {}, 10}, cfg));
}

TEST_CASE("surrogate architecture variants") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 5);
  const auto same = variant_server_units(v.server_units(), v.cut_shape(), ArchVariant::Same);
  CHECK(same == std::vector<UnitSpec>(v.server_units().begin(), v.server_units().end()));
  const auto wide = variant_server_units(v.server_units(), v.cut_shape(), ArchVariant::Wider);
  CHECK(wide[0].out == 2 * same[0].out);
  CHECK(wide[2].out == 2 * same[2].out);
  CHECK(wide[4].out == 10);
  const auto thin = variant_server_units(v.server_units(), v.cut_shape(), ArchVariant::Thinner);
  CHECK(thin[0].out == same[0].out / 2);
  const auto longer = variant_server_units(v.server_units(), v.cut_shape(), ArchVariant::Longer);
  CHECK(longer.size() == same.size() + 2);
  const auto shorter = variant_server_units(v.server_units(), v.cut_shape(), ArchVariant::Shorter);
  CHECK(shorter.size() == same.size() - 2);
  for (auto var : {ArchVariant::Wider, ArchVariant::Thinner, ArchVariant::Longer, ArchVariant::Shorter}) {
    const auto s = make_surrogate(victim_view(v), var, Rng(1));
    CHECK(s.client.bit_equal(v.client));
    CHECK(s.join().logits(slice_rows(f.val.images, 0, 4)).dims() == Shape{4, 10});
  }
  const SplitModel v1 = split(f.victim, 1);
  CHECK_THROWS_AS(variant_server_units(v1.server_units(), v1.cut_shape(), ArchVariant::Shorter), Error);
  CHECK(parse_variant("wider") == ArchVariant::Wider);
  CHECK_THROWS_AS(parse_variant("huge"), ConfigError);
  CHECK_THROWS_AS(parse_method("steal"), ConfigError);
}

TEST_CASE("exhausted budgets surface as BudgetError") {
  const auto& f = fixture();
  const SplitModel v = split(f.victim, 3);
  auto cfg = quick_config();
  cfg.method = AttackMethod::Craft;
  cfg.budget = 2000;
  auto api = oracle_for(v, 500);
  CHECK_THROWS_AS(craft_me(api, victim_view(v), cfg), BudgetError);
}

TEST_CASE("learnability: the desk victim fits its training data") {
  SyntheticSpec s;
  s.count = 2000;
  s.seed = 21;
  s.prototype_seed = 1;
  const Dataset d = synthesize(s);
  Model m = make_model(desk_victim_units(), desk_input_shape(), Rng(4));
  SurrogateTrainingConfig c;
  c.epochs = 20;
  c.batch_size = 32;
  c.opt = OptimizerConfig::sgd(0.05, 0.9);
  c.augment.enabled = false;
  train_full_model(m, d.images, d.labels, c);
  CHECK(accuracy(m, d) >= 90.0);
}
