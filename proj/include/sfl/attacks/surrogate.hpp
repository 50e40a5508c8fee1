#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfl/core/split.hpp"
#include "sfl/data/augment.hpp"
#include "sfl/nn/optim.hpp"

namespace sfl {

enum class ArchVariant { Same, Longer, Shorter, Wider, Thinner };

std::string to_string(ArchVariant v);
ArchVariant parse_variant(const std::string& name);

// What the attacker knows about the victim: the whole client part (white
// box), the split point and the architecture of the server part.
struct VictimView {
  std::vector<UnitSpec> units;
  int N = 1;
  Shape input_shape;
  ParamSet<float> client;
  int n_classes = 0;

  std::span<const UnitSpec> client_units() const {
    return std::span<const UnitSpec>(units).first(units.size() - static_cast<std::size_t>(N));
  }
  std::span<const UnitSpec> server_units() const {
    return std::span<const UnitSpec>(units).subspan(units.size() - static_cast<std::size_t>(N));
  }
  Shape cut_shape() const;
};

VictimView victim_view(const SplitModel& victim);

// Server architecture of a surrogate. Longer inserts one hidden Linear+ReLU
// before the output layer; Shorter drops the last hidden Linear+ReLU; Wider
// and Thinner scale every hidden width (Conv2d channels, Linear features) by
// 2 and 1/2. The cut input and class count never change.
std::vector<UnitSpec> variant_server_units(std::span<const UnitSpec> server, const Shape& cut_shape,
                                           ArchVariant v);

// Client part copied from the victim; server part of `variant` from random
// init.
SplitModel make_surrogate(const VictimView& v, ArchVariant variant, Rng rng);

struct SurrogateTrainingConfig {
  int epochs = 200;
  std::size_t batch_size = 128;
  OptimizerConfig opt = default_optimizer();
  AugmentConfig augment;
  double hard_weight = 1.0;  // SoftTrain: weight of hard-label CE on augmented batches
  double soft_weight = 1.0;  // SoftTrain: weight of soft-label CE on clean batches
  std::uint64_t seed = 0;

  static OptimizerConfig default_optimizer() {
    auto o = OptimizerConfig::sgd(0.02, 0.9);
    o.milestones = {60, 120, 160};
    return o;
  }
};

// Trains the server part of `s` on inputs x (image space) with hard labels
// and, when `soft` is given as (count, classes), soft targets as well. The
// client part is never modified.
void train_surrogate(SplitModel& s, const Tensor& x, std::span<const int> labels, const Tensor* soft,
                     const SurrogateTrainingConfig& cfg);

// Trains every unit of `m` from its current parameters (naive baseline).
void train_full_model(Model& m, const Tensor& x, std::span<const int> labels, const SurrogateTrainingConfig& cfg);

}  // namespace sfl
