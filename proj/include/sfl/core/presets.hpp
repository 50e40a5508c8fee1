#pragma once

#include <string>
#include <vector>

#include "sfl/data/dataset.hpp"
#include "sfl/nn/layers.hpp"

namespace sfl {

// Default desk-scale victim on 1x12x12 inputs, 10 classes:
//   0 Conv2d(1, 8, k3, s1, p1)   1 ReLU
//   2 Conv2d(8, 16, k3, s2, p1)  3 ReLU
//   4 Linear(576, 32)            5 ReLU
//   6 Linear(32, 10)
// N = 1, 3, 5 put 1, 2 and 3 parametric layers on the server.
std::vector<UnitSpec> desk_victim_units(int n_classes = 10);
Shape desk_input_shape();

// Named architecture presets ("desk", "desk_wide", "mlp"); throws
// ConfigError for unknown names.
std::vector<UnitSpec> preset_units(const std::string& name, int n_classes = 10);

SyntheticSpec desk_train_spec(std::uint64_t seed);
SyntheticSpec desk_val_spec(std::uint64_t seed);
// Same renderer, disjoint class prototypes.
SyntheticSpec desk_aux_spec(std::uint64_t seed);

}  // namespace sfl
