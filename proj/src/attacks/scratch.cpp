#include <algorithm>

#include "common.hpp"
#include "sfl/attacks/attacks.hpp"

namespace sfl {

using namespace detail;

namespace {

class ScratchBase : public ScratchAttack {
 public:
  explicit ScratchBase(const ScratchAttackConfig& cfg) : cfg_(cfg), rng_(Rng(cfg.attack.seed).child("scratch")) {}
  bool active(int epoch) const override { return epoch >= cfg_.launch_epoch; }
  std::uint64_t queries_used() const override { return queries_; }

 protected:
  AttackResult stamp(AttackResult r) const {
    r.method = cfg_.attack.method;
    r.queries_used = queries_;
    r.budget = queries_;
    return r;
  }
  bool keep(std::uint64_t step, std::uint64_t end_step) const {
    return cfg_.late_k == 0 || step + cfg_.late_k >= end_step;
  }

  ScratchAttackConfig cfg_;
  Rng rng_;
  std::uint64_t queries_ = 0;
};

// Crafts noise images batch by batch: a batch is resubmitted for `steps`
// consecutive protocol steps, then archived.
class CraftScratch final : public ScratchBase {
 public:
  using ScratchBase::ScratchBase;

  ClientBatch next_batch(const AttackerView& view) override {
    if (x_.empty()) {
      x_ = uniform_noise(view.batch_size, view.input_shape, rng_.child("noise").child(started_));
      y_ = round_robin(view.batch_size, view.n_classes, started_ * view.batch_size);
      adam_ = Optimizer<float>(OptimizerConfig::adam(cfg_.attack.craft.lr));
      t_ = 0;
      ++started_;
    }
    return {x_, y_};
  }

  void observe(const GradientQueryRecord& rec, const Tensor& input_grad, const AttackerView&) override {
    queries_ += rec.labels.size();
    if (!input_grad.all_finite()) throw DivergenceError("craft: non-finite input gradient");
    adam_.begin_step();
    adam_.step_tensor(0, x_.span(), input_grad.span());
    for (auto& p : x_.storage()) p = std::clamp(p, 0.0f, 1.0f);
    if (++t_ == cfg_.attack.craft.steps) {
      done_.push_back(std::move(x_));
      labels_.insert(labels_.end(), y_.begin(), y_.end());
      x_ = Tensor();
    }
  }

  AttackResult finish(const VictimView& deployed, std::uint64_t) override {
    if (done_.empty()) throw Error("craft: no image batch finished crafting before training ended");
    AttackResult r;
    r.training_samples = labels_.size();
    r.surrogate = make_surrogate(deployed, cfg_.attack.variant, Rng(cfg_.attack.seed).child("surrogate-init"));
    train_surrogate(r.surrogate, concat_rows<float>(done_), labels_, nullptr, cfg_.attack.surrogate);
    return stamp(std::move(r));
  }

 private:
  Tensor x_;
  std::vector<int> y_;
  Optimizer<float> adam_{OptimizerConfig::adam(0.1)};
  int t_ = 0;
  std::uint64_t started_ = 0;
  std::vector<Tensor> done_;
  std::vector<int> labels_;
};

// Submits each input once per label; responses are buffered for the offline
// phase (GM fits them directly, SoftTrain turns them into soft labels).
class SweepScratch final : public ScratchBase {
 public:
  SweepScratch(const ScratchAttackConfig& cfg, const Tensor& inputs, std::vector<int> labels)
      : ScratchBase(cfg), inputs_(inputs), labels_(std::move(labels)) {
    if (inputs_.batch() == 0) throw Error("scratch attack: no attacker inputs");
  }

  ClientBatch next_batch(const AttackerView& view) override {
    const auto classes = static_cast<std::size_t>(view.n_classes);
    const std::size_t k = std::max<std::size_t>(1, view.batch_size / classes);
    idx_.clear();
    for (std::size_t i = 0; i < k; ++i) idx_.push_back((cursor_ + i) % inputs_.batch());
    cursor_ += k;
    ClientBatch b;
    const Tensor base = gather_rows(inputs_, idx_);
    b.x = Tensor([&] {
      Shape d = base.dims();
      d[0] = k * classes;
      return d;
    }());
    sweep_rows(base, 0, k, view.n_classes, b.x, b.labels);
    return b;
  }

  void observe(const GradientQueryRecord& rec, const Tensor&, const AttackerView&) override {
    queries_ += rec.labels.size();
    Pending p;
    p.step = rec.step;
    p.inputs = idx_;
    p.activation = rec.activation;
    p.labels = rec.labels;
    p.targets = per_sample_grads(rec.grad);
    pending_.push_back(std::move(p));
  }

  AttackResult finish(const VictimView& deployed, std::uint64_t end_step) override {
    AttackResult r;
    r.surrogate = make_surrogate(deployed, cfg_.attack.variant, Rng(cfg_.attack.seed).child("surrogate-init"));
    std::vector<const Pending*> kept;
    for (const auto& p : pending_) {
      if (keep(p.step, end_step)) kept.push_back(&p);
    }
    if (kept.empty()) throw Error("scratch attack: no query records left after the lateK filter");
    if (cfg_.attack.method == AttackMethod::Gm) {
      std::vector<Tensor> a, t;
      std::vector<int> y;
      for (const auto* p : kept) {
        a.push_back(p->activation);
        t.push_back(p->targets);
        y.insert(y.end(), p->labels.begin(), p->labels.end());
      }
      r.training_samples = y.size();
      gm_fit(r.surrogate, concat_rows<float>(a), y, concat_rows<float>(t), cfg_.attack.gm,
             Rng(cfg_.attack.seed).child("gm"));
      return stamp(std::move(r));
    }
    // SoftTrain: every submitted input becomes one (x, y, q) sample.
    const auto classes = static_cast<std::size_t>(deployed.n_classes);
    std::vector<std::size_t> rows;
    std::vector<float> soft;
    for (const auto* p : kept) {
      for (std::size_t i = 0; i < p->inputs.size(); ++i) {
        std::vector<std::vector<float>> ev;
        for (std::size_t k = 0; k < classes; ++k) {
          const auto row = p->targets.row(i * classes + k);
          ev.emplace_back(row.begin(), row.end());
        }
        const int y = labels_.at(p->inputs[i]);
        const auto q = compute_soft_labels(ev, y, cfg_.attack.soft.alpha);
        soft.insert(soft.end(), q.begin(), q.end());
        rows.push_back(p->inputs[i]);
      }
    }
    std::vector<int> y;
    for (auto i : rows) y.push_back(labels_[i]);
    const Tensor q({rows.size(), classes}, std::move(soft));
    r.training_samples = rows.size();
    train_surrogate(r.surrogate, gather_rows(inputs_, rows), y, &q, cfg_.attack.surrogate);
    return stamp(std::move(r));
  }

 private:
  struct Pending {
    std::uint64_t step = 0;
    std::vector<std::size_t> inputs;
    Tensor activation;
    std::vector<int> labels;
    Tensor targets;
  };
  Tensor inputs_;
  std::vector<int> labels_;
  std::uint64_t cursor_ = 0;
  std::vector<std::size_t> idx_;
  std::vector<Pending> pending_;
};

// Trains the generator online from the gradients its batches receive.
class GanScratch final : public ScratchBase {
 public:
  using ScratchBase::ScratchBase;

  ClientBatch next_batch(const AttackerView& view) override {
    if (!gen_) {
      gen_ = std::make_unique<Generator>(
          make_generator(view.input_shape, view.n_classes, cfg_.attack.gan, rng_.child("gan-init")));
    }
    const std::size_t b = std::max<std::size_t>(2, view.batch_size - view.batch_size % 2);
    z_ = latent_batch(b, gen_->latent_dim, rng_.child("z").child(iter_));
    y_ = paired_labels(b, view.n_classes, iter_ * (b / 2));
    pass_ = gen_->run(z_, y_);
    ++iter_;
    return {pass_.output(), y_};
  }

  void observe(const GradientQueryRecord& rec, const Tensor& input_grad, const AttackerView&) override {
    queries_ += rec.labels.size();
    generator_step(*gen_, oh_, ot_, pass_, z_, input_grad, cfg_.attack.gan);
  }

  AttackResult finish(const VictimView& deployed, std::uint64_t) override {
    if (!gen_) throw Error("gan: the attacker never participated");
    return stamp(gan_phase2(*gen_, deployed, cfg_.attack, AttackMethod::Gan));
  }

 private:
  std::unique_ptr<Generator> gen_;
  Optimizer<float> oh_{OptimizerConfig::adam(cfg_.attack.gan.lr)}, ot_{OptimizerConfig::adam(cfg_.attack.gan.lr)};
  std::uint64_t iter_ = 0;
  Tensor z_;
  std::vector<int> y_;
  Decoder::Pass pass_;
};

}  // namespace

std::unique_ptr<ScratchAttack> make_scratch_attack(const ScratchAttackConfig& cfg, const Tensor* aux_inputs,
                                                   const Dataset* subset) {
  switch (cfg.attack.method) {
    case AttackMethod::Craft: return std::make_unique<CraftScratch>(cfg);
    case AttackMethod::Gan: return std::make_unique<GanScratch>(cfg);
    case AttackMethod::Gm:
      if (!aux_inputs) throw ConfigError("attack.aux", "gradient matching needs auxiliary inputs");
      return std::make_unique<SweepScratch>(cfg, *aux_inputs, std::vector<int>(aux_inputs->batch(), 0));
    case AttackMethod::SoftTrain:
      if (!subset) throw ConfigError("attack.subset", "softtrain needs a labelled subset");
      return std::make_unique<SweepScratch>(cfg, subset->images, subset->labels);
    default: break;
  }
  throw ConfigError("attack.method", to_string(cfg.attack.method) + " does not query during training");
}

}  // namespace sfl
