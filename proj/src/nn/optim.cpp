#include "sfl/nn/optim.hpp"

#include <cmath>

namespace sfl {

double scheduled_lr(const OptimizerConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int m : cfg.milestones) {
    if (epoch >= m) lr *= cfg.gamma;
  }
  return lr;
}

template <class T>
Optimizer<T>::Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)), lr_(cfg_.lr) {
  if (!(cfg_.lr > 0.0)) throw Error("optimizer learning rate must be positive");
}

template <class T>
typename Optimizer<T>::Slot& Optimizer<T>::slot(std::size_t i, std::size_t n) {
  if (slots_.size() <= i) slots_.resize(i + 1);
  Slot& s = slots_[i];
  if (s.m.size() != n) {
    s.m.assign(n, T(0));
    if (cfg_.kind == OptimizerKind::Adam) s.v.assign(n, T(0));
  }
  return s;
}

template <class T>
void Optimizer<T>::step_tensor(std::size_t index, std::span<T> w, std::span<const T> g) {
  if (w.size() != g.size()) throw ShapeError("optimizer: gradient and parameter sizes differ");
  if (t_ == 0) t_ = 1;
  const std::size_t n = w.size();
  if (cfg_.kind == OptimizerKind::SGD) {
    const T lr = static_cast<T>(lr_);
    if (cfg_.momentum == 0.0) {
      for (std::size_t i = 0; i < n; ++i) w[i] -= lr * g[i];
      return;
    }
    Slot& s = slot(index, n);
    const T mom = static_cast<T>(cfg_.momentum);
    for (std::size_t i = 0; i < n; ++i) {
      s.m[i] = mom * s.m[i] + g[i];
      w[i] -= lr * s.m[i];
    }
    return;
  }
  Slot& s = slot(index, n);
  const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T step = static_cast<T>(lr_ / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg_.eps);
  for (std::size_t i = 0; i < n; ++i) {
    s.m[i] = b1 * s.m[i] + (T(1) - b1) * g[i];
    s.v[i] = b2 * s.v[i] + (T(1) - b2) * g[i] * g[i];
    w[i] -= step * s.m[i] / (std::sqrt(s.v[i]) * inv_sqrt_bc2 + eps);
  }
}

template <class T>
void Optimizer<T>::step(ParamSet<T>& params, const ParamSet<T>& grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: gradient set does not match parameters");
  begin_step();
  std::size_t slot_index = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& g = grads[i];
    if (!p.weight.empty()) step_tensor(slot_index++, p.weight.span(), g.weight.span());
    if (!p.bias.empty()) step_tensor(slot_index++, p.bias.span(), g.bias.span());
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace sfl
