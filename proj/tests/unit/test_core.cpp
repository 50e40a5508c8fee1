#include <doctest.h>

#include <cmath>

#include "sfl/core/presets.hpp"
#include "sfl/core/server.hpp"
#include "sfl/core/split.hpp"
#include "sfl/core/training.hpp"
#include "sfl/nn/loss.hpp"
#include "test_support.hpp"

using namespace sfl;

namespace {

Model eleven_unit_model() {
  std::vector<UnitSpec> units;
  int width = 8;
  for (int i = 0; i < 5; ++i) {
    units.push_back(UnitSpec::linear(width, 8));
    units.push_back(UnitSpec::relu());
  }
  units.push_back(UnitSpec::linear(8, 3));
  return make_model(units, {8}, Rng(1));
}

std::vector<std::size_t> iota_pool(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

struct SmallRun {
  Dataset train;
  std::vector<std::size_t> pool;
  Model init;
  TrainingConfig cfg;
};

SmallRun small_run(int clients, int epochs) {
  SmallRun r;
  SyntheticSpec spec;
  spec.count = 480;
  spec.seed = 3;
  r.train = synthesize(spec);
  r.pool = iota_pool(r.train.size());
  r.init = make_model(desk_victim_units(), desk_input_shape(), Rng(5));
  r.cfg.clients = clients;
  r.cfg.epochs = epochs;
  r.cfg.batch_size = 32;
  r.cfg.N = 3;
  r.cfg.seed = 9;
  r.cfg.client_opt.milestones = {2};
  r.cfg.server_opt.milestones = {2};
  return r;
}

}  // namespace

TEST_CASE("split examples") {
  const Model m = eleven_unit_model();
  CHECK(split(m, 5).client_units().size() == 6);
  CHECK(split(m, 2).client_units().size() == 9);
  CHECK(split(m, 10).client_units().size() == 1);
  CHECK_THROWS_AS(split(m, 11), Error);
  CHECK_THROWS_AS(split(m, 0), Error);
  const auto s = split(m, 5);
  CHECK(ParamSet<float>::concat(s.client, s.server).bit_equal(m.params));
  CHECK(s.join().params.bit_equal(m.params));
}

TEST_CASE("split rejects decoder-only units") {
  std::vector<UnitSpec> units{UnitSpec::linear(4, 4), UnitSpec::sigmoid(), UnitSpec::linear(4, 2)};
  CHECK_THROWS_AS(split(make_model(units, {4}, Rng(0)), 1), ShapeError);
}

TEST_CASE("synchronize examples") {
  const Model m = eleven_unit_model();
  SUBCASE("identical copies are unchanged") {
    ParamSet<float> a = m.params, b = m.params, c = m.params;
    ParamSet<float>* copies[] = {&a, &b, &c};
    const auto mean = synchronize(copies);
    CHECK(mean.bit_equal(m.params));
  }
  SUBCASE("zeros and twos average to ones") {
    ParamSet<float> a = m.params.zeros_like(), b = m.params.zeros_like();
    b.for_each([](Tensor& t) { t.fill(2.0f); });
    ParamSet<float>* copies[] = {&a, &b};
    synchronize(copies);
    bool ones = true;
    a.for_each([&](const Tensor& t) {
      for (float v : t.span()) ones = ones && v == 1.0f;
    });
    CHECK(ones);
    CHECK(a.bit_equal(b));
  }
  SUBCASE("ten random copies match an independent mean; second pass is idempotent") {
    std::vector<ParamSet<float>> sets;
    for (int k = 0; k < 10; ++k) sets.push_back(init_params(m.units, Rng(100 + k)));
    const auto originals = sets;
    std::vector<ParamSet<float>*> ptrs;
    for (auto& s : sets) ptrs.push_back(&s);
    const auto mean = synchronize(ptrs);
    const auto mt = mean.tensors();
    double worst = 0.0;
    for (std::size_t ti = 0; ti < mt.size(); ++ti) {
      for (std::size_t e = 0; e < mt[ti]->numel(); ++e) {
        double sum = 0.0;
        for (int k = 9; k >= 0; --k) sum += originals[k].tensors()[ti]->operator[](e);
        worst = std::max(worst, std::abs(sum / 10.0 - (*mt[ti])[e]));
      }
    }
    CHECK(worst < 1e-7);
    const auto again = synchronize(ptrs);
    CHECK(again.bit_equal(mean));
  }
  SUBCASE("shape mismatch is rejected") {
    ParamSet<float> a = m.params;
    ParamSet<float> b = init_params(std::vector<UnitSpec>{UnitSpec::linear(8, 8)}, Rng(2));
    ParamSet<float>* copies[] = {&a, &b};
    CHECK_THROWS_AS(synchronize(copies), ShapeError);
  }
}

TEST_CASE("gradient query on a single Linear server matches the closed form") {
  std::vector<UnitSpec> units{UnitSpec::linear(6, 4)};
  const auto p = init_params(units, Rng(4));
  FrozenServerOracle oracle(units, p, {6}, 1000);
  const Tensor A = test::random_tensor({3, 6}, Rng(5));
  std::vector<int> y{0, 3, 2};
  const Tensor g = oracle.gradient_query(A, y);
  CHECK(g.dims() == A.dims());
  // dL/dA = W^T (softmax(W A + b) - onehot(y)) / batch, in double.
  const auto& W = p[0].weight;
  const auto& b = p[0].bias;
  for (std::size_t n = 0; n < 3; ++n) {
    double z[4], mx = -1e300, den = 0.0;
    for (int o = 0; o < 4; ++o) {
      z[o] = b[o];
      for (int i = 0; i < 6; ++i) z[o] += double(W[o * 6 + i]) * A[n * 6 + i];
      mx = std::max(mx, z[o]);
    }
    for (double& v : z) den += std::exp(v - mx);
    for (int i = 0; i < 6; ++i) {
      double expect = 0.0;
      for (int o = 0; o < 4; ++o) {
        const double s = std::exp(z[o] - mx) / den - (o == y[n] ? 1.0 : 0.0);
        expect += double(W[o * 6 + i]) * s / 3.0;
      }
      CHECK(std::abs(g[n * 6 + i] - expect) < 1e-6);
    }
  }
  CHECK(oracle.queries_used() == 3);
  CHECK(oracle.gradient_query(A, y).bit_equal(g));
  CHECK(oracle.n_classes() == 4);
}

TEST_CASE("oracle budget and shape checks") {
  std::vector<UnitSpec> units{UnitSpec::linear(2, 2)};
  FrozenServerOracle oracle(units, init_params(units, Rng(1)), {2}, 5);
  std::vector<int> y3{0, 1, 0};
  oracle.gradient_query(Tensor({3, 2}), y3);
  CHECK_THROWS_AS(oracle.gradient_query(Tensor({3, 2}), y3), BudgetError);
  CHECK(oracle.queries_used() == 3);
  std::vector<int> y1{0};
  CHECK_THROWS_AS(oracle.gradient_query(Tensor({1, 3}), y1), ShapeError);
  CHECK_THROWS_AS(oracle.gradient_query(Tensor({2, 2}), y1), Error);
}

TEST_CASE("single-client SFL equals centralized training bit for bit") {
  for (int N : {1, 3, 5}) {
    auto r = small_run(1, 3);
    r.cfg.N = N;
    const auto sfl = run_training(r.init, r.cfg, r.train, r.pool);
    const Model central = train_centralized(r.init, r.cfg, r.train, r.pool);
    CHECK(sfl.model.join().params.bit_equal(central.params));
  }
}

TEST_CASE("results do not depend on worker count or dispatch order") {
  auto r = small_run(4, 2);
  const auto a = run_training(r.init, r.cfg, r.train, r.pool);
  r.cfg.workers = 3;
  r.cfg.schedule_seed = 12345;
  const auto b = run_training(r.init, r.cfg, r.train, r.pool);
  CHECK(a.model.join().params.bit_equal(b.model.join().params));
}

TEST_CASE("L1 defense") {
  auto r = small_run(2, 1);
  const auto base = run_training(r.init, r.cfg, r.train, r.pool);
  r.cfg.l1_lambda = 0.0;
  CHECK(run_training(r.init, r.cfg, r.train, r.pool).model.join().params.bit_equal(base.model.join().params));
  r.cfg.l1_lambda = 1e-3;
  const auto defended = run_training(r.init, r.cfg, r.train, r.pool);
  CHECK_FALSE(defended.model.client.bit_equal(base.model.client));
}

TEST_CASE("training loss falls and the transcript replays") {
  auto r = small_run(3, 5);
  r.cfg.record_transcript = true;
  r.cfg.probe_count = 16;
  const auto res = run_training(r.init, r.cfg, r.train, r.pool);
  REQUIRE(res.epochs.size() == 5);
  CHECK(res.epochs[4].train_loss < res.epochs[0].train_loss);
  const auto split_init = split(r.init, r.cfg.N);
  const auto replayed = replay_server(res.transcript, {split_init.server_units().begin(), split_init.server_units().end()},
                                      res.initial_server, split_init.cut_shape(), r.cfg.server_opt);
  CHECK(replayed.bit_equal(res.model.server));
  const auto series = gradient_consistency(res.probe_snapshots);
  CHECK(series.size() == 4);
  for (double v : series) CHECK(v > 0.0);
}

TEST_CASE("frozen server: zero consistency series and unchanged parameters") {
  auto r = small_run(2, 3);
  r.cfg.mode = TrainMode::FineTune;
  r.cfg.server_frozen = true;
  r.cfg.probe_count = 8;
  const auto res = run_training(r.init, r.cfg, r.train, r.pool);
  CHECK(res.model.server.bit_equal(split(r.init, r.cfg.N).server));
  for (double v : gradient_consistency(res.probe_snapshots)) CHECK(v == 0.0);
  CHECK_THROWS_AS(gradient_consistency(std::span<const Tensor>(res.probe_snapshots).first(1)), Error);
}

TEST_CASE("query log round trip and lateK filter") {
  QueryLog log;
  for (std::uint32_t e = 0; e < 3; ++e) {
    for (std::uint64_t s = 0; s < 2; ++s) {
      GradientQueryRecord r;
      r.client = 7;
      r.epoch = e;
      r.step = e * 2 + s;
      r.activation = test::random_tensor({2, 3}, Rng(r.step));
      r.labels = {1, 2};
      r.grad = test::random_tensor({2, 3}, Rng(100 + r.step));
      log.records.push_back(r);
    }
  }
  const auto back = QueryLog::decode(log.encode());
  REQUIRE(back.records.size() == log.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    CHECK(back.records[i].epoch == log.records[i].epoch);
    CHECK(back.records[i].step == log.records[i].step);
    CHECK(back.records[i].grad.bit_equal(log.records[i].grad));
    CHECK(back.records[i].activation.bit_equal(log.records[i].activation));
  }
  const auto late = log.last_steps(3, 6);
  REQUIRE(late.records.size() == 3);
  CHECK(late.records.front().step == 3);
}

TEST_CASE("malicious client participates and is logged") {
  struct NoiseAttacker final : MaliciousClient {
    int launch;
    int observed = 0;
    explicit NoiseAttacker(int l) : launch(l) {}
    bool active(int epoch) const override { return epoch >= launch; }
    ClientBatch next_batch(const AttackerView& v) override {
      ClientBatch b;
      b.x = uniform_noise(v.batch_size, v.input_shape, Rng(v.global_step));
      for (std::size_t i = 0; i < v.batch_size; ++i) b.labels.push_back(static_cast<int>(i % 10));
      return b;
    }
    void observe(const GradientQueryRecord& r, const Tensor& dx, const AttackerView&) override {
      CHECK(dx.dims() == Shape{r.labels.size(), 1, 12, 12});
      ++observed;
    }
  };
  auto r = small_run(2, 3);
  NoiseAttacker atk(2);
  const auto res = run_training(r.init, r.cfg, r.train, r.pool, nullptr, &atk);
  CHECK(atk.observed == res.steps_per_epoch);
  CHECK(res.attacker_log.records.size() == static_cast<std::size_t>(res.steps_per_epoch));
  for (const auto& rec : res.attacker_log.records) CHECK(rec.epoch == 2);
  // Before launch the attacker is invisible: identical to a run without it.
  r.cfg.epochs = 2;
  NoiseAttacker idle(5);
  const auto quiet = run_training(r.init, r.cfg, r.train, r.pool, nullptr, &idle);
  const auto none = run_training(r.init, r.cfg, r.train, r.pool);
  CHECK(quiet.model.join().params.bit_equal(none.model.join().params));
}
