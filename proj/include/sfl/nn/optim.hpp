#pragma once

#include <span>
#include <vector>

#include "sfl/nn/layers.hpp"

namespace sfl {

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::SGD;
  double lr = 0.05;
  double momentum = 0.0;  // SGD only
  double beta1 = 0.9;     // Adam only
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<int> milestones;  // epochs at which lr is multiplied by gamma
  double gamma = 0.2;

  static OptimizerConfig sgd(double lr, double momentum = 0.0) {
    OptimizerConfig c;
    c.lr = lr;
    c.momentum = momentum;
    return c;
  }
  static OptimizerConfig adam(double lr) {
    OptimizerConfig c;
    c.kind = OptimizerKind::Adam;
    c.lr = lr;
    return c;
  }
};

// Learning rate in effect during (0-based) `epoch`: base lr times gamma for
// every milestone m with m <= epoch.
double scheduled_lr(const OptimizerConfig& cfg, int epoch);

// SGD (heavy-ball momentum, buf = m*buf + g) or Adam with bias correction.
// State is kept per slot; a slot is one parameter tensor.
template <class T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  const OptimizerConfig& config() const { return cfg_; }
  double lr() const { return lr_; }
  void set_epoch(int epoch) { lr_ = scheduled_lr(cfg_, epoch); }
  void set_lr(double lr) { lr_ = lr; }

  // Updates every tensor of `params` with the matching tensor of `grads`.
  void step(ParamSet<T>& params, const ParamSet<T>& grads);

  // Updates a single tensor held in `slot`.
  void step_tensor(std::size_t slot, std::span<T> w, std::span<const T> g);

  // Call once per step before step_tensor when driving slots by hand.
  void begin_step() { ++t_; }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  Slot& slot(std::size_t i, std::size_t n);

  OptimizerConfig cfg_;
  double lr_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace sfl
