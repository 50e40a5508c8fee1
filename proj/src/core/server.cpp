#include "sfl/core/server.hpp"

#include "sfl/bytes.hpp"
#include "sfl/nn/loss.hpp"
#include "sfl/nn/network.hpp"
#include "sfl/transport/message.hpp"

namespace sfl {

namespace {

void check_query(const Shape& expected, const Tensor& A, std::span<const int> labels) {
  if (A.sample_shape() != expected) {
    throw ShapeError("gradient query: activation " + to_string(A.dims()) + " does not match server input " +
                     to_string(expected));
  }
  if (labels.size() != A.batch()) {
    throw Error("gradient query: " + std::to_string(labels.size()) + " labels for a batch of " +
                std::to_string(A.batch()));
  }
}

}  // namespace

Server::Server(std::vector<UnitSpec> units, ParamSet<float> params, Shape input_shape, OptimizerConfig opt,
               bool frozen)
    : units_(std::move(units)),
      params_(std::move(params)),
      input_shape_(std::move(input_shape)),
      opt_(std::move(opt)),
      frozen_(frozen) {
  infer_shapes(units_, input_shape_);
  check_params<float>(units_, params_);
  accum_ = params_.zeros_like();
}

Tensor Server::handle(const Tensor& A, std::span<const int> labels, double* loss) {
  check_query(input_shape_, A, labels);
  const auto acts = forward<float>(units_, params_, A);
  const auto ce = cross_entropy(acts.back(), labels);
  if (loss != nullptr) *loss = ce.loss;
  auto g = backward<float>(units_, params_, acts, ce.grad, BackwardOptions{!frozen_, true});
  if (!frozen_) {
    auto dst = accum_.tensors();
    const auto src = std::as_const(g.params).tensors();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      for (std::size_t e = 0; e < dst[i]->numel(); ++e) (*dst[i])[e] += (*src[i])[e];
    }
    ++handled_;
  }
  return std::move(g.input);
}

Tensor Server::probe(const Tensor& A, std::span<const int> labels) const {
  check_query(input_shape_, A, labels);
  const auto acts = forward<float>(units_, params_, A);
  const auto ce = cross_entropy(acts.back(), labels);
  return backward<float>(units_, params_, acts, ce.grad, BackwardOptions{false, true}).input;
}

void Server::end_step() {
  if (frozen_ || handled_ == 0) return;
  if (handled_ > 1) {
    const float inv = 1.0f / static_cast<float>(handled_);
    accum_.for_each([&](Tensor& t) {
      for (auto& v : t.span()) v *= inv;
    });
  }
  opt_.step(params_, accum_);
  accum_.for_each([](Tensor& t) { t.fill(0.0f); });
  handled_ = 0;
}

FrozenServerOracle::FrozenServerOracle(std::vector<UnitSpec> units, ParamSet<float> params, Shape input_shape,
                                       std::uint64_t budget)
    : units_(std::move(units)), params_(std::move(params)), input_shape_(std::move(input_shape)), budget_(budget) {
  infer_shapes(units_, input_shape_);
  check_params<float>(units_, params_);
}

int FrozenServerOracle::n_classes() const {
  return static_cast<int>(infer_shapes(units_, input_shape_).back().at(0));
}

Tensor FrozenServerOracle::gradient_query(const Tensor& A, std::span<const int> labels) {
  check_query(input_shape_, A, labels);
  if (labels.size() > budget_ - used_) {
    throw BudgetError("query budget exhausted: " + std::to_string(used_) + " of " + std::to_string(budget_) +
                      " used, " + std::to_string(labels.size()) + " requested");
  }
  used_ += labels.size();
  const auto acts = forward<float>(units_, params_, A);
  const auto ce = cross_entropy(acts.back(), labels);
  return backward<float>(units_, params_, acts, ce.grad, BackwardOptions{false, true}).input;
}

std::vector<std::uint8_t> QueryLog::encode() const {
  std::vector<std::uint8_t> out;
  auto append = [&](const Message& m) {
    const auto f = sfl::encode(m);
    out.insert(out.end(), f.begin(), f.end());
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    append(ActivationMsg{r.client, r.step, r.activation, r.labels});
    append(GradientMsg{r.client, r.step, r.grad});
    if (i + 1 == records.size() || records[i + 1].epoch != r.epoch) append(EndEpochMsg{r.epoch});
  }
  return out;
}

QueryLog QueryLog::decode(std::span<const std::uint8_t> bytes) {
  QueryLog log;
  std::vector<GradientQueryRecord> pending;
  const auto msgs = decode_stream(bytes);
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (const auto* end = std::get_if<EndEpochMsg>(&msgs[i])) {
      for (auto& r : pending) {
        r.epoch = end->epoch;
        log.records.push_back(std::move(r));
      }
      pending.clear();
      continue;
    }
    const auto* a = std::get_if<ActivationMsg>(&msgs[i]);
    if (a == nullptr || i + 1 >= msgs.size()) throw FormatError("query log: expected an Activation/Gradient pair");
    const auto* g = std::get_if<GradientMsg>(&msgs[i + 1]);
    if (g == nullptr || g->client != a->client || g->step != a->step || g->grad.dims() != a->activation.dims()) {
      throw FormatError("query log: Activation at frame " + std::to_string(i) + " lacks a matching Gradient");
    }
    pending.push_back({a->client, a->step, 0, a->activation, a->labels, g->grad});
    ++i;
  }
  if (!pending.empty()) throw FormatError("query log: records after the last EndEpoch");
  return log;
}

void QueryLog::save(const std::string& path) const { write_file(path, encode()); }

QueryLog QueryLog::load(const std::string& path) { return decode(read_file(path)); }

QueryLog QueryLog::last_steps(std::uint64_t k, std::uint64_t end_step) const {
  QueryLog out;
  for (const auto& r : records) {
    if (r.step + k >= end_step) out.records.push_back(r);
  }
  return out;
}

}  // namespace sfl
