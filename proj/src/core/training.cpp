#include "sfl/core/training.hpp"

#include <algorithm>
#include <cmath>

#include "sfl/core/parallel.hpp"
#include "sfl/nn/loss.hpp"
#include "sfl/nn/network.hpp"
#include "sfl/transport/bus.hpp"

namespace sfl {

namespace {

struct BatchPlan {
  int steps = 0;
  std::size_t batch = 0;
};

BatchPlan plan_batches(const Shards& shards, std::size_t batch) {
  if (batch == 0) throw Error("training: batch_size must be positive");
  std::size_t smallest = shards.at(0).size();
  for (const auto& s : shards) smallest = std::min(smallest, s.size());
  if (smallest == 0) throw Error("training: a client shard is empty");
  return {static_cast<int>((smallest + batch - 1) / batch), batch};
}

// Sample indices of `step` for a shard shuffled by `order`. The final step
// also takes the shard's remainder, so every sample is visited each epoch.
std::vector<std::size_t> step_indices(const std::vector<std::size_t>& order, const BatchPlan& p, int step) {
  const std::size_t begin = static_cast<std::size_t>(step) * p.batch;
  const std::size_t end = step + 1 == p.steps ? order.size() : begin + p.batch;
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::vector<std::size_t> epoch_order(const std::vector<std::size_t>& shard, const Rng& root, std::size_t client,
                                     int epoch) {
  std::vector<std::size_t> order = shard;
  root.child("shuffle").child(client).child(static_cast<std::uint64_t>(epoch)).shuffle(order.begin(), order.end());
  return order;
}

ClientBatch benign_batch(const Dataset& train, const std::vector<std::size_t>& idx, const AugmentConfig& aug,
                         const Rng& root, std::size_t client, std::uint64_t global_step) {
  ClientBatch b;
  b.x = augment(gather_rows(train.images, idx), aug, root.child("augment").child(client).child(global_step));
  b.labels.reserve(idx.size());
  for (auto i : idx) b.labels.push_back(train.labels[i]);
  return b;
}

void add_l1(ParamSet<float>& grads, const ParamSet<float>& params, double lambda) {
  if (lambda == 0.0) return;
  const float lam = static_cast<float>(lambda);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& w = params[i].weight;
    Tensor& g = grads[i].weight;
    for (std::size_t e = 0; e < w.numel(); ++e) {
      g[e] += w[e] > 0.0f ? lam : (w[e] < 0.0f ? -lam : 0.0f);
    }
  }
}

std::vector<Tensor> tensors_of(const ParamSet<float>& p) {
  std::vector<Tensor> out;
  p.for_each([&](const Tensor& t) { out.push_back(t); });
  return out;
}

ParamSet<float> params_from(const ParamSet<float>& like, std::vector<Tensor> ts) {
  ParamSet<float> out = like;
  auto dst = out.tensors();
  if (dst.size() != ts.size()) throw ShapeError("sync: received " + std::to_string(ts.size()) + " tensors");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->dims() != ts[i].dims()) throw ShapeError("sync: received tensor of shape " + to_string(ts[i].dims()));
    *dst[i] = std::move(ts[i]);
  }
  return out;
}

struct ClientState {
  std::uint32_t id = 0;
  ParamSet<float> params;
  Optimizer<float> opt;
  std::vector<std::size_t> order;
  ClientBatch batch;
  Activations<float> acts;
  double loss = 0.0;
};

}  // namespace

TrainingResult run_training(const Model& init, const TrainingConfig& cfg, const Dataset& train,
                            const std::vector<std::size_t>& pool, const Dataset* val, MaliciousClient* attacker) {
  if (cfg.epochs < 1) throw Error("training: epochs must be positive");
  SplitModel sm = split(init, cfg.N);
  const Rng root = Rng(cfg.seed).child("training");
  const Shards shards =
      partition(train, pool, {cfg.partition, cfg.clients, cfg.classes_per_client}, root.child("partition"));
  const BatchPlan plan = plan_batches(shards, cfg.batch_size);
  const auto client_units = sm.client_units();
  const Shape cut = sm.cut_shape();
  const auto M = static_cast<std::size_t>(cfg.clients);

  TrainingResult res;
  res.initial_server = sm.server;
  res.steps_per_epoch = plan.steps;
  res.total_steps = static_cast<std::uint64_t>(plan.steps) * static_cast<std::uint64_t>(cfg.epochs);
  Server server({sm.server_units().begin(), sm.server_units().end()}, sm.server, cut, cfg.server_opt,
                !cfg.server_trains());

  std::vector<ClientState> clients;
  for (std::size_t k = 0; k < M + (attacker ? 1 : 0); ++k) {
    clients.push_back({static_cast<std::uint32_t>(k), sm.client, Optimizer<float>(cfg.client_opt), {}, {}, {}, 0.0});
  }
  ClientState* adv = attacker ? &clients.back() : nullptr;

  std::unique_ptr<Link> link;
  if (cfg.socket_transport) {
    link = std::make_unique<SocketLink>();
  } else {
    link = std::make_unique<LoopbackLink>();
  }
  Bus bus(std::move(link), cfg.record_transcript);
  {
    std::vector<std::pair<std::uint32_t, Message>> hello;
    for (const auto& c : clients) hello.emplace_back(c.id, HelloMsg{c.id});
    bus.deliver_phase(std::move(hello));
  }

  Tensor probe_acts;
  std::vector<int> probe_labels;
  if (cfg.probe_count > 0) {
    std::vector<std::size_t> idx = pool;
    root.child("probe").shuffle(idx.begin(), idx.end());
    idx.resize(std::min(cfg.probe_count, idx.size()));
    probe_acts = forward_output<float>(client_units, sm.client, gather_rows(train.images, idx));
    for (auto i : idx) probe_labels.push_back(train.labels[i]);
  }

  auto view_for = [&](int epoch, int step) {
    AttackerView v;
    v.epoch = epoch;
    v.step = step;
    v.global_step = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(plan.steps) +
                    static_cast<std::uint64_t>(step);
    v.total_steps = res.total_steps;
    v.steps_per_epoch = plan.steps;
    v.batch_size = plan.batch;
    v.client_units = client_units;
    v.client_params = adv ? &adv->params : nullptr;
    v.input_shape = sm.input_shape;
    v.n_classes = train.n_classes;
    return v;
  };

  auto sync = [&](bool attacker_uploads) {
    std::vector<std::pair<std::uint32_t, Message>> uploads;
    for (const auto& c : clients) {
      if (&c == adv && !attacker_uploads) continue;
      uploads.emplace_back(c.id, SyncModelMsg{tensors_of(c.params)});
    }
    const auto received = bus.deliver_phase(std::move(uploads));
    std::vector<ParamSet<float>> copies;
    for (const auto& m : received) copies.push_back(params_from(sm.client, std::get<SyncModelMsg>(m).tensors));
    std::vector<const ParamSet<float>*> view;
    for (const auto& c : copies) view.push_back(&c);
    const ParamSet<float> mean = average_params(view);
    const auto bcast = bus.send(SyncModelMsg{tensors_of(mean)});
    const ParamSet<float> got = params_from(sm.client, std::get<SyncModelMsg>(bcast).tensors);
    for (auto& c : clients) c.params = got;
    return got;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& c : clients) c.opt.set_epoch(epoch);
    server.set_epoch(epoch);
    const bool adv_active = attacker != nullptr && attacker->active(epoch);
    sync(adv_active);

    std::vector<ClientState*> active;
    for (auto& c : clients) {
      if (&c != adv || adv_active) active.push_back(&c);
    }
    for (std::size_t k = 0; k < M; ++k) clients[k].order = epoch_order(shards[k], root, k, epoch);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (int step = 0; step < plan.steps; ++step) {
      const std::uint64_t gs = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(plan.steps) +
                               static_cast<std::uint64_t>(step);
      const AttackerView view = view_for(epoch, step);
      // Attacker batches may depend on its private state; build them on this thread.
      if (adv_active) {
        adv->batch = attacker->next_batch(view);
        if (adv->batch.x.sample_shape() != sm.input_shape || adv->batch.labels.size() != adv->batch.x.batch()) {
          throw ShapeError("attacker batch has shape " + to_string(adv->batch.x.dims()));
        }
      }
      parallel_for(
          active.size(), cfg.workers,
          [&](std::size_t i) {
            ClientState& c = *active[i];
            if (&c != adv) {
              c.batch = benign_batch(train, step_indices(c.order, plan, step), cfg.augment, root, c.id, gs);
            }
            c.acts = forward<float>(client_units, c.params, c.batch.x);
          },
          cfg.schedule_seed ^ gs);

      std::vector<std::pair<std::uint32_t, Message>> posted;
      for (auto* c : active) posted.emplace_back(c->id, ActivationMsg{c->id, gs, c->acts.back(), c->batch.labels});
      const auto arrived = bus.deliver_phase(std::move(posted));
      std::vector<std::pair<std::uint32_t, Message>> replies;
      for (std::size_t i = 0; i < arrived.size(); ++i) {
        const auto& a = std::get<ActivationMsg>(arrived[i]);
        double loss = 0.0;
        Tensor g = server.handle(a.activation, a.labels, &loss);
        if (!std::isfinite(loss)) {
          throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(step) + ", client " + std::to_string(a.client));
        }
        active[i]->loss = loss;
        replies.emplace_back(a.client, GradientMsg{a.client, gs, std::move(g)});
      }
      const auto answers = bus.deliver_phase(std::move(replies));
      server.end_step();

      parallel_for(
          active.size(), cfg.workers,
          [&](std::size_t i) {
            ClientState& c = *active[i];
            if (&c == adv) return;
            const auto& dA = std::get<GradientMsg>(answers[i]).grad;
            auto g = backward<float>(client_units, c.params, c.acts, dA, BackwardOptions{true, false});
            add_l1(g.params, c.params, cfg.l1_lambda);
            c.opt.step(c.params, g.params);
          },
          cfg.schedule_seed ^ ~gs);
      if (adv_active) {
        const auto& dA = std::get<GradientMsg>(answers.back()).grad;
        auto g = backward<float>(client_units, adv->params, adv->acts, dA, BackwardOptions{true, true});
        GradientQueryRecord rec{adv->id, gs, static_cast<std::uint32_t>(epoch), adv->acts.back(), adv->batch.labels,
                                dA};
        attacker->observe(rec, g.input, view);
        res.attacker_log.records.push_back(std::move(rec));
        adv->opt.step(adv->params, g.params);
      }
      for (auto* c : active) {
        c->acts.clear();
        if (c != adv) {
          loss_sum += c->loss;
          ++loss_count;
        }
      }
    }
    bus.send(EndEpochMsg{static_cast<std::uint32_t>(epoch)});

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    em.lr = scheduled_lr(cfg.client_opt, epoch);
    if (val != nullptr && cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
      std::vector<const ParamSet<float>*> benign;
      for (std::size_t k = 0; k < M; ++k) benign.push_back(&clients[k].params);
      SplitModel snap = sm;
      snap.client = average_params(benign);
      snap.server = server.params();
      const auto pred = snap.join().predict(val->images);
      std::size_t hit = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == val->labels[i] ? 1 : 0;
      em.val_accuracy = 100.0 * static_cast<double>(hit) / static_cast<double>(pred.size());
    }
    res.epochs.push_back(em);
    if (cfg.probe_count > 0) res.probe_snapshots.push_back(server.probe(probe_acts, probe_labels));
  }

  const bool adv_last = attacker != nullptr && attacker->active(cfg.epochs - 1);
  sm.client = sync(adv_last);
  sm.server = server.params();
  res.model = std::move(sm);
  res.transcript = bus.take_transcript();
  return res;
}

Model train_centralized(const Model& init, const TrainingConfig& cfg, const Dataset& train,
                        const std::vector<std::size_t>& pool) {
  Model m = init;
  const Rng root = Rng(cfg.seed).child("training");
  const Shards shards = partition(train, pool, {PartitionMode::IID, 1, 0}, root.child("partition"));
  const BatchPlan plan = plan_batches(shards, cfg.batch_size);
  Optimizer<float> opt(cfg.client_opt);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_epoch(epoch);
    const auto order = epoch_order(shards[0], root, 0, epoch);
    for (int step = 0; step < plan.steps; ++step) {
      const std::uint64_t gs = static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(plan.steps) +
                               static_cast<std::uint64_t>(step);
      const auto b = benign_batch(train, step_indices(order, plan, step), cfg.augment, root, 0, gs);
      const auto acts = forward<float>(m.units, m.params, b.x);
      const auto ce = cross_entropy(acts.back(), b.labels);
      if (!std::isfinite(ce.loss)) throw DivergenceError("centralized training diverged");
      const auto g = backward<float>(m.units, m.params, acts, ce.grad, BackwardOptions{true, false});
      opt.step(m.params, g.params);
    }
  }
  return m;
}

ParamSet<float> replay_server(std::span<const std::uint8_t> transcript, const std::vector<UnitSpec>& server_units,
                              const ParamSet<float>& initial, const Shape& cut_shape, const OptimizerConfig& opt) {
  Server server(server_units, initial, cut_shape, opt, false);
  server.set_epoch(0);
  std::vector<Tensor> pending;  // gradients awaiting their recorded counterparts
  std::size_t checked = 0;
  bool have_step = false;
  std::uint64_t current = 0;
  for (auto frame : split_frames(transcript)) {
    const Message m = decode(frame);
    if (const auto* a = std::get_if<ActivationMsg>(&m)) {
      if (have_step && a->step != current) {
        server.end_step();
        pending.clear();
        checked = 0;
      }
      have_step = true;
      current = a->step;
      pending.push_back(server.handle(a->activation, a->labels));
    } else if (const auto* g = std::get_if<GradientMsg>(&m)) {
      if (checked >= pending.size() || !pending[checked].bit_equal(g->grad)) {
        throw Error("replay: recomputed gradient for client " + std::to_string(g->client) + " at step " +
                    std::to_string(g->step) + " differs from the transcript");
      }
      ++checked;
    } else if (const auto* e = std::get_if<EndEpochMsg>(&m)) {
      if (have_step) server.end_step();
      have_step = false;
      pending.clear();
      checked = 0;
      server.set_epoch(static_cast<int>(e->epoch) + 1);
    }
  }
  if (have_step) server.end_step();
  return server.params();
}

std::vector<double> gradient_consistency(std::span<const Tensor> snapshots) {
  if (snapshots.size() < 2) throw Error("gradient consistency needs at least two snapshots");
  std::vector<double> out;
  for (std::size_t t = 1; t < snapshots.size(); ++t) {
    const Tensor& cur = snapshots[t];
    const Tensor& prev = snapshots[t - 1];
    if (cur.dims() != prev.dims()) throw ShapeError("gradient consistency: snapshot shapes differ");
    double diff = 0.0, base = 0.0;
    for (std::size_t i = 0; i < cur.batch(); ++i) {
      double d2 = 0.0, p2 = 0.0;
      const auto rc = cur.row(i), rp = prev.row(i);
      for (std::size_t e = 0; e < rc.size(); ++e) {
        const double d = static_cast<double>(rc[e]) - static_cast<double>(rp[e]);
        d2 += d * d;
        p2 += static_cast<double>(rp[e]) * static_cast<double>(rp[e]);
      }
      diff += std::sqrt(d2);
      base += std::sqrt(p2);
    }
    out.push_back(base > 0.0 ? diff / base : 0.0);
  }
  return out;
}

}  // namespace sfl
