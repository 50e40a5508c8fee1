#include "sfl/nn/second_order.hpp"

#include "sfl/nn/loss.hpp"
#include "sfl/nn/network.hpp"
#include "sfl/nn/ops.hpp"

namespace sfl {

void check_second_order_support(std::span<const UnitSpec> units) {
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!units[i].splittable()) {
      throw Error("unit " + std::to_string(i) + ": " + to_string(units[i].kind) +
                  " is not supported by the second-order pass");
    }
  }
}

namespace {

// Input-gradients at every boundary: deltas[i] = dCE/d acts[i].
template <class T>
std::vector<BasicTensor<T>> input_gradients(std::span<const UnitSpec> units, const ParamSet<T>& params,
                                            const Activations<T>& acts, const BasicTensor<T>& dlogits) {
  std::vector<BasicTensor<T>> deltas(units.size() + 1);
  deltas[units.size()] = dlogits;
  for (std::size_t ii = units.size(); ii-- > 0;) {
    const auto& u = units[ii];
    const auto& x = acts[ii];
    const auto& g = deltas[ii + 1];
    switch (u.kind) {
      case UnitKind::Linear: deltas[ii] = ops::linear_backward_input(g, params[ii].weight, x.dims()); break;
      case UnitKind::Conv2d: deltas[ii] = ops::conv2d_backward_input(u, g, params[ii].weight, x.dims()); break;
      case UnitKind::ReLU: deltas[ii] = ops::relu_mask(x, g); break;
      case UnitKind::MaxPool2x2: deltas[ii] = ops::maxpool_backward(x, g); break;
      case UnitKind::Flatten: deltas[ii] = g.reshaped(x.dims()); break;
      default: throw Error("second-order pass: unsupported unit");
    }
  }
  return deltas;
}

}  // namespace

template <class T>
GradientMatchResult<T> second_order_input_grad_backward(std::span<const UnitSpec> units, const ParamSet<T>& params,
                                                        const BasicTensor<T>& activation,
                                                        std::span<const int> labels,
                                                        const BasicTensor<T>& target_grad) {
  check_second_order_support(units);
  if (target_grad.dims() != activation.dims()) {
    throw ShapeError("gradient matching: target " + to_string(target_grad.dims()) + " does not match activation " +
                     to_string(activation.dims()));
  }
  const Activations<T> acts = forward(units, params, activation);
  const auto ce = cross_entropy(acts.back(), labels);
  const auto deltas = input_gradients(units, params, acts, ce.grad);

  GradientMatchResult<T> r;
  r.input_grad = deltas[0];
  BasicTensor<T> bar(activation.dims());
  double phi = 0.0;
  for (std::size_t i = 0; i < bar.numel(); ++i) {
    const T d = deltas[0][i] - target_grad[i];
    phi += static_cast<double>(d) * static_cast<double>(d);
    bar[i] = T(2) * d;
  }
  r.loss = phi;
  r.grads = params.zeros_like();

  // Adjoint of deltas[0] pushed up to the logits.
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto& u = units[i];
    switch (u.kind) {
      case UnitKind::Linear:
        ops::linear_param_grad(bar, deltas[i + 1], r.grads[i].weight, static_cast<BasicTensor<T>*>(nullptr));
        bar = ops::linear_forward(bar, params[i].weight, static_cast<const BasicTensor<T>*>(nullptr));
        break;
      case UnitKind::Conv2d:
        ops::conv2d_param_grad(u, bar, deltas[i + 1], r.grads[i].weight, static_cast<BasicTensor<T>*>(nullptr));
        bar = ops::conv2d_forward(u, bar, params[i].weight, static_cast<const BasicTensor<T>*>(nullptr));
        break;
      case UnitKind::ReLU: bar = ops::relu_mask(acts[i], bar); break;
      case UnitKind::MaxPool2x2: bar = ops::maxpool_gather(acts[i], bar); break;
      case UnitKind::Flatten: bar.reshape(acts[i + 1].dims()); break;
      default: break;
    }
  }

  // Through dCE/dlogits = (softmax - target) / batch.
  const auto s = softmax(acts.back());
  const std::size_t b = s.dim(0), n = s.dim(1);
  BasicTensor<T> hbar(s.dims());
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t row = 0; row < b; ++row) {
    const T* sr = s.data() + row * n;
    const T* br = bar.data() + row * n;
    double sb = 0.0;
    for (std::size_t j = 0; j < n; ++j) sb += static_cast<double>(sr[j]) * static_cast<double>(br[j]);
    for (std::size_t j = 0; j < n; ++j) {
      hbar[row * n + j] = static_cast<T>(static_cast<double>(sr[j]) * (static_cast<double>(br[j]) - sb) * inv_b);
    }
  }

  const auto g2 = backward(units, params, acts, hbar, BackwardOptions{true, false});
  for (std::size_t i = 0; i < units.size(); ++i) {
    auto& dst = r.grads[i];
    const auto& src = g2.params[i];
    for (std::size_t k = 0; k < dst.weight.numel(); ++k) dst.weight[k] += src.weight[k];
    for (std::size_t k = 0; k < dst.bias.numel(); ++k) dst.bias[k] += src.bias[k];
  }
  return r;
}

template <class T>
double gradient_match_loss(std::span<const UnitSpec> units, const ParamSet<T>& params,
                           const BasicTensor<T>& activation, std::span<const int> labels,
                           const BasicTensor<T>& target_grad) {
  const Activations<T> acts = forward(units, params, activation);
  const auto ce = cross_entropy(acts.back(), labels);
  const auto g = backward(units, params, acts, ce.grad, BackwardOptions{false, true});
  double phi = 0.0;
  for (std::size_t i = 0; i < g.input.numel(); ++i) {
    const double d = static_cast<double>(g.input[i]) - static_cast<double>(target_grad[i]);
    phi += d * d;
  }
  return phi;
}

template GradientMatchResult<float> second_order_input_grad_backward(std::span<const UnitSpec>,
                                                                     const ParamSet<float>&, const Tensor&,
                                                                     std::span<const int>, const Tensor&);
template GradientMatchResult<double> second_order_input_grad_backward(std::span<const UnitSpec>,
                                                                      const ParamSet<double>&, const Tensor64&,
                                                                      std::span<const int>, const Tensor64&);
template double gradient_match_loss(std::span<const UnitSpec>, const ParamSet<float>&, const Tensor&,
                                    std::span<const int>, const Tensor&);
template double gradient_match_loss(std::span<const UnitSpec>, const ParamSet<double>&, const Tensor64&,
                                    std::span<const int>, const Tensor64&);

}  // namespace sfl
