#include "sfl/data/partition.hpp"

#include <algorithm>
#include <cmath>

namespace sfl {

Shards partition(const Dataset& data, const std::vector<std::size_t>& pool, const PartitionPlan& plan, Rng rng) {
  if (plan.clients < 1) throw Error("partition: need at least one client");
  const auto M = static_cast<std::size_t>(plan.clients);
  if (M > pool.size()) {
    throw Error("partition: " + std::to_string(M) + " clients exceed " + std::to_string(pool.size()) + " samples");
  }
  Shards shards(M);
  if (plan.mode == PartitionMode::IID) {
    std::vector<std::size_t> order = pool;
    rng.child("iid").shuffle(order.begin(), order.end());
    const std::size_t base = order.size() / M, extra = order.size() % M;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < M; ++k) {
      const std::size_t n = base + (k < extra ? 1 : 0);
      shards[k].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                       order.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
    }
    return shards;
  }

  const int NC = data.n_classes, C = plan.classes_per_client;
  if (C < 1 || C > NC) throw Error("partition: classes_per_client must be in [1, " + std::to_string(NC) + "]");
  std::vector<std::vector<std::size_t>> owners(static_cast<std::size_t>(NC));
  for (std::size_t k = 0; k < M; ++k) {
    for (int j = 0; j < C; ++j) owners[(k * static_cast<std::size_t>(C) + static_cast<std::size_t>(j)) % NC].push_back(k);
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(NC));
  for (auto i : pool) by_class.at(static_cast<std::size_t>(data.labels.at(i))).push_back(i);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) continue;
    if (owners[c].empty()) {
      throw Error("partition: class " + std::to_string(c) + " has samples but no owner (clients * C < classes)");
    }
    rng.child("class").child(c).shuffle(by_class[c].begin(), by_class[c].end());
    for (std::size_t i = 0; i < by_class[c].size(); ++i) shards[owners[c][i % owners[c].size()]].push_back(by_class[c][i]);
  }
  for (auto& s : shards) std::sort(s.begin(), s.end());
  return shards;
}

std::vector<std::size_t> attacker_subset(const Dataset& data, const std::vector<std::size_t>& pool, double fraction,
                                         bool stratified, Rng rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("attacker subset: fraction must be in (0, 1]");
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(pool.size())));
  if (!stratified) {
    std::vector<std::size_t> order = pool;
    rng.child("uniform").shuffle(order.begin(), order.end());
    order.resize(n);
    return order;
  }
  const auto NC = static_cast<std::size_t>(data.n_classes);
  std::vector<std::vector<std::size_t>> by_class(NC);
  for (auto i : pool) by_class.at(static_cast<std::size_t>(data.labels.at(i))).push_back(i);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < NC; ++c) {
    auto& v = by_class[c];
    rng.child("stratified").child(c).shuffle(v.begin(), v.end());
    const std::size_t want = n / NC + (c < n % NC ? 1 : 0);
    v.resize(std::min(want, v.size()));
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace sfl
