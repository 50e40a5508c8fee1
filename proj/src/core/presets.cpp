#include "sfl/core/presets.hpp"

namespace sfl {

std::vector<UnitSpec> desk_victim_units(int n_classes) {
  return {UnitSpec::conv2d(1, 8, 3, 1, 1), UnitSpec::relu(),        UnitSpec::conv2d(8, 16, 3, 2, 1),
          UnitSpec::relu(),                UnitSpec::linear(576, 32), UnitSpec::relu(),
          UnitSpec::linear(32, n_classes)};
}

Shape desk_input_shape() { return {1, 12, 12}; }

std::vector<UnitSpec> preset_units(const std::string& name, int n_classes) {
  if (name == "desk") return desk_victim_units(n_classes);
  if (name == "desk_wide") {
    return {UnitSpec::conv2d(1, 16, 3, 1, 1), UnitSpec::relu(),         UnitSpec::conv2d(16, 32, 3, 2, 1),
            UnitSpec::relu(),                 UnitSpec::linear(1152, 64), UnitSpec::relu(),
            UnitSpec::linear(64, n_classes)};
  }
  if (name == "mlp") {
    return {UnitSpec::flatten(), UnitSpec::linear(144, 64), UnitSpec::relu(), UnitSpec::linear(64, n_classes)};
  }
  throw ConfigError("model.preset", "unknown preset '" + name + "'");
}

namespace {

SyntheticSpec desk_spec(std::uint64_t seed, std::size_t count, std::uint64_t prototype_seed) {
  SyntheticSpec s;
  s.count = count;
  s.seed = seed;
  s.prototype_seed = prototype_seed;
  return s;
}

}  // namespace

SyntheticSpec desk_train_spec(std::uint64_t seed) { return desk_spec(seed * 2 + 1, 10000, 1); }
SyntheticSpec desk_val_spec(std::uint64_t seed) { return desk_spec(seed * 2 + 2, 2000, 1); }
SyntheticSpec desk_aux_spec(std::uint64_t seed) { return desk_spec(seed * 2 + 101, 10000, 2); }

}  // namespace sfl
