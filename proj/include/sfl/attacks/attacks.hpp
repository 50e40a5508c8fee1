#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sfl/attacks/surrogate.hpp"
#include "sfl/core/server.hpp"
#include "sfl/core/training.hpp"
#include "sfl/data/dataset.hpp"
#include "sfl/nn/decoder.hpp"

namespace sfl {

enum class AttackMethod { Craft, Gan, Gm, Train, SoftTrain, Naive };

std::string to_string(AttackMethod m);
AttackMethod parse_method(const std::string& name);

struct AttackResult {
  AttackMethod method = AttackMethod::Train;
  SplitModel surrogate;        // naive: `full` holds the model, surrogate is its split view
  std::uint64_t queries_used = 0;
  std::uint64_t budget = 0;
  std::size_t training_samples = 0;  // size of the surrogate training set
};

struct CraftConfig {
  int steps = 20;
  double lr = 0.1;
  std::size_t batch = 64;  // images crafted together (each step queries all of them)
};

struct GeneratorConfig {
  int latent_dim = 64;
  int base_channels = 32;  // channels after the projection; halved by each up-sampling stage
  double lr = 1e-4;
  double diversity_weight = 50.0;
  double diversity_cap = 1.0;
  std::size_t batch = 64;          // generated samples per query batch (pairs share a class)
  std::size_t phase2_samples = 2000;
};

struct GmConfig {
  int epochs = 100;
  std::size_t batch = 100;  // (A, y) pairs per optimizer step
  OptimizerConfig opt = OptimizerConfig::adam(1e-3);
};

struct SoftTrainConfig {
  double alpha = 0.9;
};

struct AttackConfig {
  AttackMethod method = AttackMethod::Train;
  ArchVariant variant = ArchVariant::Same;
  std::uint64_t budget = 0;
  CraftConfig craft;
  GeneratorConfig gan;
  GmConfig gm;
  SoftTrainConfig soft;
  SurrogateTrainingConfig surrogate;
  std::size_t query_chunk = 10;  // inputs per query batch for per-label sweeps (GM, SoftTrain)
  std::uint64_t seed = 0;
};

// Soft label from the per-label gradient vectors e[0..N_C): cosines to
// e[c] (0 for a zero-norm vector), tail (1-alpha) cos_k / sum_{m!=c}(cos_m + 1)
// clipped at 0, q_c = alpha, then renormalized to sum 1.
std::vector<double> compute_soft_labels(std::span<const std::vector<float>> e, int c, double alpha);

// Fine-tuning mode attacks: queries go to a frozen server.
AttackResult craft_me(GradientQueryApi& api, const VictimView& v, const AttackConfig& cfg);
AttackResult gan_me(GradientQueryApi& api, const VictimView& v, const AttackConfig& cfg);
AttackResult gm_me(GradientQueryApi& api, const VictimView& v, const Tensor& aux_inputs, const AttackConfig& cfg);
AttackResult softtrain_me(GradientQueryApi& api, const VictimView& v, const Dataset& subset, const AttackConfig& cfg);
AttackResult train_me(const VictimView& v, const Dataset& subset, const AttackConfig& cfg);
// Whole victim architecture from random init; touches neither the victim's
// weights nor the query API.
AttackResult naive_baseline(const std::vector<UnitSpec>& units, const Shape& input_shape, int N,
                            const Dataset& subset, const AttackConfig& cfg);

// Runs `steps` Adam steps of CE descent on x (clamped to [0, 1]) driven by
// gradient queries; each step queries every row once.
Tensor craft_inputs(GradientQueryApi& api, const VictimView& v, Tensor x, std::span<const int> labels,
                    const CraftConfig& cfg);

// Offline gradient matching: trains the server part of `s` so that its
// per-sample cut gradients match `targets` (rows aligned with `activations`).
void gm_fit(SplitModel& s, const Tensor& activations, std::span<const int> labels, const Tensor& targets,
            const GmConfig& cfg, Rng rng);

// Per-sample gradients (rows) from a batch-mean response of `batch` rows.
Tensor per_sample_grads(const Tensor& batch_mean_grad);

// Conditional generator G(z|c): [z, onehot(c)] -> Linear -> ReLU, viewed as
// (base, H/4, W/4), then ConvT(k4, s2, p1) -> ReLU -> ConvT(k4, s2, p1) ->
// Sigmoid. Image height and width must be divisible by 4.
struct Generator {
  Decoder net;
  int latent_dim = 0;
  int n_classes = 0;
  Shape output_shape;

  Tensor input(const Tensor& z, std::span<const int> labels) const;
  Decoder::Pass run(const Tensor& z, std::span<const int> labels) const { return net.run(input(z, labels)); }
  Tensor generate(const Tensor& z, std::span<const int> labels) const { return run(z, labels).output(); }
};

Generator make_generator(const Shape& image_shape, int n_classes, const GeneratorConfig& cfg, Rng rng);

// Diversity term over consecutive pairs (2j, 2j+1) of a batch: returns
// -mean_j min(r_j, cap), r_j = |G1 - G2|_1 / |z1 - z2|_1, and writes its
// gradient w.r.t. the generated images into `grad` (same shape as images).
double diversity_loss(const Tensor& images, const Tensor& z, double cap, Tensor& grad);

// Training-from-scratch attackers: they act inside run_training and run their
// offline phase afterwards against the deployed client part.
class ScratchAttack : public MaliciousClient {
 public:
  virtual AttackResult finish(const VictimView& deployed, std::uint64_t end_step) = 0;
  virtual std::uint64_t queries_used() const = 0;
};

struct ScratchAttackConfig {
  AttackConfig attack;
  int launch_epoch = 0;
  std::uint64_t late_k = 0;  // keep only gradients from the last K global steps (0: keep all)
};

// Noise-driven attackers (Craft, GAN), aux-data GM and limited-data SoftTrain.
std::unique_ptr<ScratchAttack> make_scratch_attack(const ScratchAttackConfig& cfg, const Tensor* aux_inputs,
                                                   const Dataset* subset);

}  // namespace sfl
