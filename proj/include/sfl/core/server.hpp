#pragma once
// The server side of the protocol and the only interface it offers clients:
// a gradient query. Nothing reachable from a client returns logits,
// probabilities or predicted labels.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfl/nn/optim.hpp"
#include "sfl/nn/layers.hpp"

namespace sfl {

// One query round trip: cut activation and labels in, loss gradient at the
// cut out.
struct GradientQueryRecord {
  std::uint32_t client = 0;
  std::uint64_t step = 0;
  std::uint32_t epoch = 0;
  Tensor activation;
  std::vector<int> labels;
  Tensor grad;
};

template <class R>
concept CarriesPredictions = requires(const R& r) { r.logits; } || requires(const R& r) { r.probabilities; } ||
                             requires(const R& r) { r.predictions; } || requires(const R& r) { r.predicted_labels; };
static_assert(!CarriesPredictions<GradientQueryRecord>);

class GradientQueryApi {
 public:
  virtual ~GradientQueryApi() = default;
  // Gradient of the batch-mean cross-entropy w.r.t. A. Each sample counts as
  // one query.
  virtual Tensor gradient_query(const Tensor& A, std::span<const int> labels) = 0;
  // Per-sample shape the server expects.
  virtual Shape input_shape() const = 0;
  virtual int n_classes() const = 0;
};

// Server half during training. handle() answers one client's activation and,
// unless frozen, accumulates parameter gradients; end_step() applies their
// mean over the clients handled in the step.
class Server {
 public:
  Server(std::vector<UnitSpec> units, ParamSet<float> params, Shape input_shape, OptimizerConfig opt,
         bool frozen = false);

  Tensor handle(const Tensor& A, std::span<const int> labels, double* loss = nullptr);
  // Answers without touching accumulated state (consistency probes).
  Tensor probe(const Tensor& A, std::span<const int> labels) const;
  void end_step();
  void set_epoch(int epoch) { opt_.set_epoch(epoch); }

  bool frozen() const { return frozen_; }
  const std::vector<UnitSpec>& units() const { return units_; }
  const ParamSet<float>& params() const { return params_; }
  const Shape& input_shape() const { return input_shape_; }

 private:
  std::vector<UnitSpec> units_;
  ParamSet<float> params_;
  Shape input_shape_;
  Optimizer<float> opt_;
  bool frozen_;
  ParamSet<float> accum_;
  int handled_ = 0;
};

// A trained server behind the query API, parameters fixed, with a query
// budget. Exceeding the budget raises BudgetError before any work is done.
class FrozenServerOracle final : public GradientQueryApi {
 public:
  FrozenServerOracle(std::vector<UnitSpec> units, ParamSet<float> params, Shape input_shape,
                     std::uint64_t budget);

  Tensor gradient_query(const Tensor& A, std::span<const int> labels) override;
  Shape input_shape() const override { return input_shape_; }
  int n_classes() const override;

  std::uint64_t budget() const { return budget_; }
  std::uint64_t queries_used() const { return used_; }
  std::uint64_t remaining() const { return budget_ - used_; }

 private:
  std::vector<UnitSpec> units_;
  ParamSet<float> params_;
  Shape input_shape_;
  std::uint64_t budget_;
  std::uint64_t used_ = 0;
};

// Records in transport framing: an Activation frame followed by its Gradient
// frame per record, with an EndEpoch frame closing each epoch.
struct QueryLog {
  std::vector<GradientQueryRecord> records;

  std::vector<std::uint8_t> encode() const;
  static QueryLog decode(std::span<const std::uint8_t> bytes);
  void save(const std::string& path) const;
  static QueryLog load(const std::string& path);

  // Records from global steps [end_step - k, end_step): the "lateK" filter.
  QueryLog last_steps(std::uint64_t k, std::uint64_t end_step) const;
};

}  // namespace sfl
