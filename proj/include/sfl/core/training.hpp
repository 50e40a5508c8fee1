#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sfl/core/server.hpp"
#include "sfl/core/split.hpp"
#include "sfl/data/augment.hpp"
#include "sfl/data/dataset.hpp"
#include "sfl/data/partition.hpp"
#include "sfl/nn/optim.hpp"

namespace sfl {

enum class TrainMode { FromScratch, FineTune };

struct TrainingConfig {
  TrainMode mode = TrainMode::FromScratch;
  int clients = 10;
  int N = 1;
  PartitionMode partition = PartitionMode::IID;
  int classes_per_client = 0;
  int epochs = 200;
  std::size_t batch_size = 128;
  OptimizerConfig client_opt = default_optimizer();
  OptimizerConfig server_opt = default_optimizer();
  // FineTune: the server is frozen unless this is false, in which case it
  // trains with server_opt (typically a very small lr).
  bool server_frozen = true;
  AugmentConfig augment;
  double l1_lambda = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t schedule_seed = 0;  // dispatch order of client work; no effect on results
  int workers = 1;
  bool record_transcript = false;
  bool socket_transport = false;
  std::size_t probe_count = 0;  // consistency probes snapshotted after each epoch
  int eval_every = 0;           // validation accuracy every k epochs (0: never)

  static OptimizerConfig default_optimizer() {
    auto o = OptimizerConfig::sgd(0.05, 0.9);
    o.milestones = {60, 120, 160};
    return o;
  }
  bool server_trains() const { return mode == TrainMode::FromScratch || !server_frozen; }
};

struct ClientBatch {
  Tensor x;
  std::vector<int> labels;
};

// What the malicious client can see: its own (white-box) client copy and the
// protocol clock. Nothing of the server.
struct AttackerView {
  int epoch = 0;
  int step = 0;
  std::uint64_t global_step = 0;
  std::uint64_t total_steps = 0;
  int steps_per_epoch = 0;
  std::size_t batch_size = 0;
  std::span<const UnitSpec> client_units;
  const ParamSet<float>* client_params = nullptr;
  Shape input_shape;
  int n_classes = 0;
};

// A malicious participant. When active it submits one batch per step like any
// client, receives the cut gradient, and updates its own client copy with it
// (so its batches also flow into synchronization). While inactive it neither
// queries nor uploads, but still receives the broadcast model.
class MaliciousClient {
 public:
  virtual ~MaliciousClient() = default;
  virtual bool active(int epoch) const = 0;
  virtual ClientBatch next_batch(const AttackerView& view) = 0;
  // `input_grad` is dL/dx through the attacker's client copy.
  virtual void observe(const GradientQueryRecord& record, const Tensor& input_grad, const AttackerView& view) = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;     // mean over benign client batches
  double val_accuracy = -1.0;  // -1 when not evaluated
  double lr = 0.0;
};

struct TrainingResult {
  SplitModel model;  // synchronized after the last epoch
  std::vector<EpochMetrics> epochs;
  std::vector<Tensor> probe_snapshots;  // server gradient at the probes after each epoch
  QueryLog attacker_log;
  std::vector<std::uint8_t> transcript;
  ParamSet<float> initial_server;
  std::uint64_t total_steps = 0;
  int steps_per_epoch = 0;
};

// Runs split federated training from `init` on the samples `pool` of `train`. The attacker, if
// any, joins as client id `clients` (after the benign ids).
TrainingResult run_training(const Model& init, const TrainingConfig& cfg, const Dataset& train,
                            const std::vector<std::size_t>& pool, const Dataset* val = nullptr,
                            MaliciousClient* attacker = nullptr);

// Unsplit training with the data order, augmentation and schedule a single
// SFL client would see; the single-client equivalence oracle.
Model train_centralized(const Model& init, const TrainingConfig& cfg, const Dataset& train,
                        const std::vector<std::size_t>& pool);

// Feeds the Activation frames of a recorded transcript into a fresh server
// and returns its final parameters. Recomputed gradients are checked against
// the recorded Gradient frames bit for bit.
ParamSet<float> replay_server(std::span<const std::uint8_t> transcript, const std::vector<UnitSpec>& server_units,
                              const ParamSet<float>& initial, const Shape& cut_shape, const OptimizerConfig& opt);

// For t >= 1: mean_i ||g_t,i - g_{t-1},i|| / mean_i ||g_{t-1},i|| over probe
// rows i. Needs at least two snapshots.
std::vector<double> gradient_consistency(std::span<const Tensor> snapshots);

}  // namespace sfl
