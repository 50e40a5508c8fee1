#pragma once

#include <span>
#include <vector>

#include "sfl/nn/model.hpp"

namespace sfl {

// A model cut after unit L-N: the client runs units [0, L-N), the server the
// last N units.
struct SplitModel {
  std::vector<UnitSpec> units;
  int N = 1;
  Shape input_shape;
  ParamSet<float> client;
  ParamSet<float> server;

  std::size_t L() const { return units.size(); }
  std::size_t cut() const { return units.size() - static_cast<std::size_t>(N); }
  std::span<const UnitSpec> client_units() const { return std::span<const UnitSpec>(units).first(cut()); }
  std::span<const UnitSpec> server_units() const { return std::span<const UnitSpec>(units).subspan(cut()); }
  // Per-sample shape of the activation sent to the server.
  Shape cut_shape() const;
  Model join() const;
};

// Requires 1 <= N <= L-1 and splittable units only.
SplitModel split(const Model& m, int N);

// Elementwise mean of the copies, accumulated in double in the given order
// (callers pass ascending client id) and divided by the copy count.
ParamSet<float> average_params(std::span<const ParamSet<float>* const> copies);

// Replaces every copy with their mean and returns it.
ParamSet<float> synchronize(std::span<ParamSet<float>* const> copies);

}  // namespace sfl
