#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <numeric>

#include "sfl/nn/loss.hpp"
#include "sfl/nn/model.hpp"
#include "sfl/nn/network.hpp"
#include "sfl/nn/optim.hpp"
#include "sfl/nn/second_order.hpp"
#include "test_support.hpp"

using namespace sfl;
using sfl::test::max_rel_err;
using sfl::test::numeric_grad;
using sfl::test::random_tensor64;

namespace {

ParamSet<double> init64(const std::vector<UnitSpec>& units, std::uint64_t seed) {
  return init_params(units, Rng(seed)).cast<double>();
}

// Smallest distance of any ReLU input to 0 or any max-pool window's runner-up
// to its max. Central differences are only valid away from these kinks.
double kink_margin(const std::vector<UnitSpec>& units, const Activations<double>& acts) {
  double margin = 1e9;
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& x = acts[i];
    if (units[i].kind == UnitKind::ReLU) {
      for (auto v : x.span()) margin = std::min(margin, std::abs(v));
    } else if (units[i].kind == UnitKind::MaxPool2x2) {
      const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t r = 0; r + 1 < h; r += 2) {
          for (std::size_t c = 0; c + 1 < w; c += 2) {
            const double* base = x.data() + p * h * w;
            double v[4] = {base[r * w + c], base[r * w + c + 1], base[(r + 1) * w + c], base[(r + 1) * w + c + 1]};
            std::sort(v, v + 4);
            // All-zero windows behind a ReLU stay zero under small perturbations.
            if (i > 0 && units[i - 1].kind == UnitKind::ReLU && v[3] == 0.0) continue;
            margin = std::min(margin, v[3] - v[2]);
          }
        }
      }
    }
  }
  return margin;
}

// Checks parameter and input gradients of  sum(R * net(x))  against central
// differences. Seeds are advanced until no kink lies within reach of the
// step. Returns the worst relative error.
double fd_check(const std::vector<UnitSpec>& units, Shape in_dims, std::uint64_t seed) {
  Rng rng(seed);
  auto params = init64(units, seed);
  auto x = random_tensor64(in_dims, rng.child("x"));
  Activations<double> acts = forward<double>(units, params, x);
  for (std::uint64_t attempt = 1; kink_margin(units, acts) < 2.5e-3; ++attempt) {
    REQUIRE(attempt < 100000);
    rng = Rng(seed).child(attempt);
    params = init64(units, rng.key());
    x = random_tensor64(in_dims, rng.child("x"));
    acts = forward<double>(units, params, x);
  }
  const auto r = random_tensor64(acts.back().dims(), rng.child("r"));
  auto objective = [&]() {
    const auto y = forward_output<double>(units, params, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
    return s;
  };
  const auto g = backward<double>(units, params, acts, r);
  double worst = max_rel_err(g.input, numeric_grad(x, objective));
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!units[i].has_params()) continue;
    worst = std::max(worst, max_rel_err(g.params[i].weight, numeric_grad(params[i].weight, objective)));
    worst = std::max(worst, max_rel_err(g.params[i].bias, numeric_grad(params[i].bias, objective)));
  }
  return worst;
}

}  // namespace

TEST_CASE("forward examples") {
  SUBCASE("identity Linear") {
    std::vector<UnitSpec> units{UnitSpec::linear(3, 3)};
    ParamSet<float> p = init_params(units, Rng(1));
    p[0].weight = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    p[0].bias.fill(0);
    Tensor x({2, 3}, {1, -2, 3, 0.5f, 0, -1});
    CHECK(forward_output<float>(units, p, x).bit_equal(x));
  }
  SUBCASE("ReLU") {
    std::vector<UnitSpec> units{UnitSpec::relu()};
    ParamSet<float> p{{LayerParams<float>{}}};
    const auto y = forward_output<float>(units, p, Tensor({1, 2}, {-1, 2}));
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 2.0f);
  }
  SUBCASE("1x1 conv doubles") {
    std::vector<UnitSpec> units{UnitSpec::conv2d(1, 1, 1)};
    ParamSet<float> p{{LayerParams<float>{Tensor({1, 1, 1, 1}, {2.0f}), Tensor({1}, {0.0f})}}};
    const auto y = forward_output<float>(units, p, Tensor({1, 1, 2, 2}, 1.0f));
    CHECK(y.dims() == Shape{1, 1, 2, 2});
    for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == 2.0f);
  }
  SUBCASE("shape mismatch names the unit") {
    std::vector<UnitSpec> units{UnitSpec::conv2d(1, 2, 3, 1, 1), UnitSpec::relu(), UnitSpec::linear(10, 2)};
    auto p = init_params(units, Rng(3));
    try {
      forward<float>(units, p, Tensor({1, 1, 4, 4}));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(e.unit() == 2);
    }
  }
}

TEST_CASE("backward examples") {
  SUBCASE("single Linear: input grad is W^T delta") {
    std::vector<UnitSpec> units{UnitSpec::linear(3, 2)};
    ParamSet<double> p{{LayerParams<double>{Tensor64({2, 3}, {1, 2, 3, 4, 5, 6}), Tensor64({2})}}};
    Tensor64 x({1, 3}, {0.1, 0.2, 0.3});
    const auto acts = forward<double>(units, p, x);
    const auto g = backward<double>(units, p, acts, Tensor64({1, 2}, {1.0, -1.0}));
    CHECK(g.input[0] == doctest::Approx(-3));
    CHECK(g.input[1] == doctest::Approx(-3));
    CHECK(g.input[2] == doctest::Approx(-3));
  }
  SUBCASE("ReLU with negative pre-activation passes zero") {
    std::vector<UnitSpec> units{UnitSpec::relu()};
    ParamSet<double> p{{LayerParams<double>{}}};
    Tensor64 x({1, 2}, {-0.5, 0.5});
    const auto acts = forward<double>(units, p, x);
    const auto g = backward<double>(units, p, acts, Tensor64({1, 2}, {3.0, 3.0}));
    CHECK(g.input[0] == 0.0);
    CHECK(g.input[1] == 3.0);
  }
  SUBCASE("missing activation cache is rejected") {
    std::vector<UnitSpec> units{UnitSpec::relu(), UnitSpec::relu()};
    ParamSet<double> p{{LayerParams<double>{}, LayerParams<double>{}}};
    Activations<double> acts{Tensor64({1, 2})};
    CHECK_THROWS_AS(backward<double>(units, p, acts, Tensor64({1, 2})), Error);
  }
}

TEST_CASE("finite-difference oracle for every unit kind") {
  constexpr double kTol = 1e-4;
  CHECK(fd_check({UnitSpec::linear(8, 5)}, {4, 8}, 11) < kTol);
  CHECK(fd_check({UnitSpec::linear(32, 6)}, {3, 2, 4, 4}, 12) < kTol);  // implicit flatten
  CHECK(fd_check({UnitSpec::conv2d(3, 4, 3, 1, 1)}, {2, 3, 6, 6}, 13) < kTol);
  CHECK(fd_check({UnitSpec::conv2d(2, 3, 3, 2, 1)}, {4, 2, 8, 8}, 14) < kTol);
  CHECK(fd_check({UnitSpec::conv2d(8, 2, 2, 2, 0)}, {2, 8, 8, 8}, 15) < kTol);
  CHECK(fd_check({UnitSpec::conv_transpose2d(3, 2, 4, 2, 1)}, {2, 3, 4, 4}, 16) < kTol);
  CHECK(fd_check({UnitSpec::conv_transpose2d(2, 3, 3, 1, 0)}, {2, 2, 5, 5}, 17) < kTol);
  CHECK(fd_check({UnitSpec::relu()}, {4, 8, 8, 8}, 18) < kTol);
  CHECK(fd_check({UnitSpec::sigmoid()}, {4, 8, 8, 8}, 19) < kTol);
  CHECK(fd_check({UnitSpec::maxpool2x2()}, {4, 8, 8, 8}, 20) < kTol);
  CHECK(fd_check({UnitSpec::flatten()}, {4, 8, 8, 8}, 21) < kTol);
  CHECK(fd_check({UnitSpec::conv2d(2, 4, 3, 1, 1), UnitSpec::relu(), UnitSpec::maxpool2x2(), UnitSpec::flatten(),
                  UnitSpec::linear(64, 5)},
                 {2, 2, 8, 8}, 22) < kTol);
  CHECK(fd_check({UnitSpec::linear(6, 7), UnitSpec::relu(), UnitSpec::linear(7, 3)}, {4, 6}, 23) < kTol);
}

TEST_CASE("cross-entropy examples") {
  SUBCASE("uniform logits give ln 10") {
    Tensor logits({3, 10}, 0.0f);
    std::vector<int> y{0, 4, 9};
    CHECK(cross_entropy(logits, y).loss == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  }
  SUBCASE("margin +100 gives near-zero loss") {
    Tensor64 logits({1, 10}, 0.0);
    logits[3] = 100.0;
    std::vector<int> y{3};
    CHECK(cross_entropy(logits, y).loss < 1e-8);
  }
  SUBCASE("two classes, uniform logits, label 0") {
    Tensor64 logits({1, 2}, 0.0);
    std::vector<int> y{0};
    const auto r = cross_entropy(logits, y);
    CHECK(r.grad[0] == doctest::Approx(-0.5));
    CHECK(r.grad[1] == doctest::Approx(0.5));
  }
  SUBCASE("label out of range") {
    Tensor logits({1, 3}, 0.0f);
    std::vector<int> y{3};
    CHECK_THROWS_AS(cross_entropy(logits, y), Error);
  }
  SUBCASE("softmax rows sum to one; loss is non-negative") {
    Rng rng(5);
    auto logits = test::random_tensor({16, 10}, rng, -20, 20);
    const auto s = softmax(logits);
    for (std::size_t b = 0; b < 16; ++b) {
      double sum = 0;
      for (auto v : s.row(b)) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    std::vector<int> y(16);
    for (int i = 0; i < 16; ++i) y[i] = i % 10;
    CHECK(cross_entropy(logits, y).loss >= 0.0);
  }
  SUBCASE("soft targets: one-hot target equals hard label") {
    Rng rng(6);
    auto logits = test::random_tensor64({4, 5}, rng);
    Tensor64 t({4, 5}, 0.0);
    std::vector<int> y{1, 0, 4, 2};
    for (int b = 0; b < 4; ++b) t[b * 5 + y[b]] = 1.0;
    const auto hard = cross_entropy(logits, y);
    const auto soft = cross_entropy_soft(logits, t);
    CHECK(hard.loss == doctest::Approx(soft.loss));
    CHECK(max_rel_err(hard.grad, soft.grad) < 1e-12);
  }
}

TEST_CASE("optimizer examples") {
  SUBCASE("plain SGD") {
    Optimizer<double> opt(OptimizerConfig::sgd(0.05));
    std::vector<double> w{1.0, -2.0}, g{0.4, -1.0};
    opt.begin_step();
    opt.step_tensor(0, w, g);
    CHECK(w[0] == doctest::Approx(1.0 - 0.05 * 0.4));
    CHECK(w[1] == doctest::Approx(-2.0 + 0.05));
  }
  SUBCASE("milestone schedule") {
    auto cfg = OptimizerConfig::sgd(0.05);
    cfg.milestones = {60, 120, 160};
    CHECK(scheduled_lr(cfg, 59) == doctest::Approx(0.05));
    CHECK(scheduled_lr(cfg, 60) == doctest::Approx(0.01));
    CHECK(scheduled_lr(cfg, 120) == doctest::Approx(0.002));
    CHECK(scheduled_lr(cfg, 199) == doctest::Approx(0.0004));
  }
  SUBCASE("first Adam step moves by about lr") {
    Optimizer<double> opt(OptimizerConfig::adam(0.1));
    std::vector<double> w{0.0}, g{3.7};
    opt.begin_step();
    opt.step_tensor(0, w, g);
    const double expected = 0.1 * 3.7 / (3.7 + 1e-8);
    CHECK(std::abs(w[0] + expected) < 1e-12);
  }
  SUBCASE("SGD momentum accumulates") {
    Optimizer<double> opt(OptimizerConfig::sgd(0.1, 0.9));
    std::vector<double> w{0.0}, g{1.0};
    opt.begin_step();
    opt.step_tensor(0, w, g);
    opt.begin_step();
    opt.step_tensor(0, w, g);
    CHECK(w[0] == doctest::Approx(-0.1 - 0.1 * 1.9));
  }
}

TEST_CASE("second-order gradient-matching pass") {
  SUBCASE("finite differences on a random 2-unit server") {
    std::vector<UnitSpec> units{UnitSpec::conv2d(3, 4, 3, 1, 1), UnitSpec::linear(64, 5)};
    Rng rng(31);
    auto p = init64(units, 31);
    auto a = random_tensor64({3, 3, 4, 4}, rng.child("a"));
    auto target = random_tensor64({3, 3, 4, 4}, rng.child("t"), -0.05, 0.05);
    std::vector<int> y{0, 3, 4};
    const auto r = second_order_input_grad_backward<double>(units, p, a, y, target);
    auto phi = [&]() { return gradient_match_loss<double>(units, p, a, y, target); };
    CHECK(r.loss == doctest::Approx(phi()));
    for (std::size_t i = 0; i < units.size(); ++i) {
      CHECK(max_rel_err(r.grads[i].weight, numeric_grad(p[i].weight, phi)) < 1e-3);
      CHECK(max_rel_err(r.grads[i].bias, numeric_grad(p[i].bias, phi)) < 1e-3);
    }
  }
  SUBCASE("finite differences through ReLU, max-pool and flatten") {
    std::vector<UnitSpec> units{UnitSpec::conv2d(2, 3, 3, 1, 1), UnitSpec::relu(), UnitSpec::maxpool2x2(),
                                UnitSpec::flatten(), UnitSpec::linear(12, 6), UnitSpec::relu(),
                                UnitSpec::linear(6, 4)};
    Rng rng(32);
    auto p = init64(units, 32);
    auto a = random_tensor64({2, 2, 4, 4}, rng.child("a"));
    auto target = random_tensor64({2, 2, 4, 4}, rng.child("t"), -0.05, 0.05);
    std::vector<int> y{1, 2};
    const auto r = second_order_input_grad_backward<double>(units, p, a, y, target);
    auto phi = [&]() { return gradient_match_loss<double>(units, p, a, y, target); };
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (!units[i].has_params()) continue;
      CHECK(max_rel_err(r.grads[i].weight, numeric_grad(p[i].weight, phi)) < 1e-3);
      CHECK(max_rel_err(r.grads[i].bias, numeric_grad(p[i].bias, phi)) < 1e-3);
    }
  }
  SUBCASE("zero at surrogate == victim") {
    std::vector<UnitSpec> units{UnitSpec::linear(6, 5), UnitSpec::relu(), UnitSpec::linear(5, 3)};
    auto p = init_params(units, Rng(33));
    auto a = test::random_tensor({4, 6}, Rng(34));
    std::vector<int> y{0, 1, 2, 0};
    const auto acts = forward<float>(units, p, a);
    const auto target = backward<float>(units, p, acts, cross_entropy(acts.back(), y).grad).input;
    const auto r = second_order_input_grad_backward<float>(units, p, a, y, target);
    CHECK(r.loss == 0.0);
    bool all_zero = true;
    r.grads.for_each([&](const Tensor& t) {
      for (auto v : t.span()) all_zero = all_zero && v == 0.0f;
    });
    CHECK(all_zero);
  }
  SUBCASE("one-input two-class toy matches the hand derivation") {
    // logits = (w0 a + b0, w1 a + b1), label 0:
    //   g = dL/da = d (s0 - 1),  d = w0 - w1,  s0 = sigmoid(d a + b0 - b1)
    //   Phi = (g - t)^2
    //   dPhi/dw0 = 2 (g - t) [(s0 - 1) + d s0 (1 - s0) a] = -dPhi/dw1
    //   dPhi/db0 = 2 (g - t) d s0 (1 - s0)                 = -dPhi/db1
    const double w0 = 0.7, w1 = -0.4, b0 = 0.1, b1 = -0.2, av = 0.9, t = 0.05;
    std::vector<UnitSpec> units{UnitSpec::linear(1, 2)};
    ParamSet<double> p{{LayerParams<double>{Tensor64({2, 1}, {w0, w1}), Tensor64({2}, {b0, b1})}}};
    std::vector<int> y{0};
    const auto r = second_order_input_grad_backward<double>(units, p, Tensor64({1, 1}, {av}), y,
                                                            Tensor64({1, 1}, {t}));
    const double d = w0 - w1;
    const double s0 = 1.0 / (1.0 + std::exp(-(d * av + b0 - b1)));
    const double g = d * (s0 - 1.0);
    const double dw0 = 2 * (g - t) * ((s0 - 1.0) + d * s0 * (1 - s0) * av);
    const double db0 = 2 * (g - t) * d * s0 * (1 - s0);
    CHECK(r.loss == doctest::Approx((g - t) * (g - t)).epsilon(1e-12));
    CHECK(r.grads[0].weight[0] == doctest::Approx(dw0).epsilon(1e-12));
    CHECK(r.grads[0].weight[1] == doctest::Approx(-dw0).epsilon(1e-12));
    CHECK(r.grads[0].bias[0] == doctest::Approx(db0).epsilon(1e-12));
    CHECK(r.grads[0].bias[1] == doctest::Approx(-db0).epsilon(1e-12));
  }
  SUBCASE("unsupported unit is rejected") {
    std::vector<UnitSpec> units{UnitSpec::linear(4, 4), UnitSpec::sigmoid(), UnitSpec::linear(4, 2)};
    auto p = init_params(units, Rng(1));
    std::vector<int> y{0};
    CHECK_THROWS_AS(second_order_input_grad_backward<float>(units, p, Tensor({1, 4}), y, Tensor({1, 4})), Error);
  }
}

TEST_CASE("forward is bit-deterministic") {
  std::vector<UnitSpec> units{UnitSpec::conv2d(1, 4, 3, 1, 1), UnitSpec::relu(), UnitSpec::linear(4 * 36, 10)};
  auto p = init_params(units, Rng(9));
  auto x = test::random_tensor({5, 1, 6, 6}, Rng(10));
  CHECK(forward_output<float>(units, p, x).bit_equal(forward_output<float>(units, p, x)));
  CHECK(init_params(units, Rng(9)).bit_equal(p));
}

TEST_CASE("checkpoint round trip and rejection") {
  std::vector<UnitSpec> units{UnitSpec::conv2d(1, 4, 3, 2, 1), UnitSpec::relu(), UnitSpec::maxpool2x2(),
                              UnitSpec::flatten(), UnitSpec::linear(16, 10)};
  const Model m = make_model(units, {1, 8, 8}, Rng(77));
  const auto bytes = encode_checkpoint(m);
  CHECK(bytes[0] == 'S');
  CHECK(bytes[3] == 'X');
  const Model back = decode_checkpoint(bytes);
  CHECK(back.units == m.units);
  CHECK(back.input_shape == m.input_shape);
  CHECK(back.params.bit_equal(m.params));
  CHECK(encode_checkpoint(back) == bytes);

  auto bad = bytes;
  bad[0] = 'Q';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), FormatError);
  auto wrong_version = bytes;
  wrong_version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(wrong_version), FormatError);
}
