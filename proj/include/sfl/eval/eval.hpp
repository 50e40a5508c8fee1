#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfl/data/dataset.hpp"
#include "sfl/nn/decoder.hpp"
#include "sfl/nn/model.hpp"
#include "sfl/nn/optim.hpp"

namespace sfl {

// Top-1 accuracy in percent. Throws on an empty dataset.
double accuracy(const Model& m, const Dataset& d);
double accuracy(std::span<const int> predictions, std::span<const int> labels);

// Percentage of inputs on which the two models' argmax predictions agree.
double fidelity(const Model& a, const Model& b, const Tensor& x);
double fidelity(std::span<const int> a, std::span<const int> b);

struct AdvConfig {
  double fgsm_eps = 0.1;
  double pgd_eps = 0.002;
  int pgd_iters = 50;
  double pgd_step = -1.0;  // negative: pgd_eps / 5
  std::uint64_t seed = 0;  // PGD target draw

  double step() const { return pgd_step < 0.0 ? pgd_eps / 5.0 : pgd_step; }
};

struct AdvResult {
  double asr_fgsm = 0.0;  // percent
  double asr_pgd = 0.0;   // percent
  std::size_t evaluated = 0;  // samples the victim classifies correctly
};

// FGSM (untargeted) and targeted PGD crafted on the surrogate and evaluated
// on the victim, over the samples the victim initially gets right.
AdvResult adversarial_transfer(const Model& surrogate, const Model& victim, const Dataset& d, const AdvConfig& cfg);

// x + eps * sign(grad of CE at labels), clamped to [0, 1].
Tensor fgsm(const Model& m, const Tensor& x, std::span<const int> labels, double eps);
// Targeted: descends CE toward `targets`, projecting onto the L-inf ball of
// radius eps around x and onto [0, 1] after every step.
Tensor pgd_targeted(const Model& m, const Tensor& x, std::span<const int> targets, double eps, double step,
                    int iters);

// Decoder from cut activations back to images: a linear adapter to
// (channels, H/4, W/4), then ConvT(k4, s2, p1) -> ReLU -> ConvT(k4, s2, p1) ->
// Sigmoid. The adapter is a strided Conv2d when the cut
// is an image whose sides are a common multiple of (H/4, W/4), else Linear.
struct InverterSpec {
  int channels = 32;
  int epochs = 50;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

Decoder make_inverter(const Shape& cut_shape, const Shape& image_shape, const InverterSpec& spec, Rng rng);

// Trains the decoder on (client(x), x) for the attacker's images, then
// reconstructs the probe images from their activations. Returns the mean
// per-pixel squared error over the probes.
double model_inversion(std::span<const UnitSpec> client_units, const ParamSet<float>& client, const Shape& input_shape,
                       const Tensor& attacker_images, const Tensor& probe_images, const InverterSpec& spec);

// One row of results.csv.
struct MetricsRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string mode;
  int N = 0;
  std::string attack;
  std::uint64_t queries_used = 0;
  double accuracy = 0.0;
  double fidelity = 0.0;
  std::optional<double> mi_mse;
  std::optional<double> asr_fgsm;
  std::optional<double> asr_pgd;
  std::optional<double> wallclock_s;

  void validate() const;
};

}  // namespace sfl
