#pragma once

#include <cstdint>
#include <vector>

#include "sfl/data/dataset.hpp"

namespace sfl {

enum class PartitionMode { IID, ClassLimited };

struct PartitionPlan {
  PartitionMode mode = PartitionMode::IID;
  int clients = 1;
  int classes_per_client = 0;  // ClassLimited only
};

using Shards = std::vector<std::vector<std::size_t>>;

// Splits `pool` (indices into `data`) into disjoint client shards.
//
// IID: the pool is shuffled and dealt in contiguous blocks whose sizes differ
// by at most one.
//
// ClassLimited: client k owns classes (k*C + j) mod N_C for j < C; each class's
// samples are shuffled and dealt round robin over its owners. Shard label sets
// never exceed C classes; sizes are equal within one sample when classes are
// balanced and every class has the same number of owners (M*C a multiple of
// N_C), otherwise they follow the class counts.
Shards partition(const Dataset& data, const std::vector<std::size_t>& pool, const PartitionPlan& plan, Rng rng);

// Attacker's limited data: `fraction` of `pool`, uniform by default or
// stratified by class.
std::vector<std::size_t> attacker_subset(const Dataset& data, const std::vector<std::size_t>& pool, double fraction,
                                         bool stratified, Rng rng);

}  // namespace sfl
