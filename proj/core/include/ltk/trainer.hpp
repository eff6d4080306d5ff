// SPDX-License-Identifier: Apache-2.0
#pragma once

// Optimization loop: SGD with momentum and weight decay under a cosine
// schedule with warm restarts, optional mixup, source pretraining, and
// transfer training for every supported method.

#include <cstdint>
#include <string>
#include <vector>

#include "ltk/data.hpp"
#include "ltk/losses.hpp"
#include "ltk/model.hpp"

namespace ltk {

struct TrainSchedule {
  double max_lr = 0.1;
  double min_lr = 1e-5;
  int cycle_length_epochs = 20;
  int cycle_mult = 1;  // cycle length multiplier after each restart
  int total_epochs = 60;
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // Global-norm gradient clip applied before every step; 0 disables. The
  // default is far above the cross-entropy regime (norms ~0.1-2.5) and only
  // tames the early latent-pull transient, whose norm starts ~1e4.
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MixupConfig {
  bool enabled = false;
  double alpha = 0.2;

  void validate() const;
};

// Learning rate at a global step. Cycles are cycle_length_epochs *
// steps_per_epoch steps long; within a cycle the rate follows
// min + (max - min)/2 * (1 + cos(pi * t / T)) and snaps back to max at each
// restart, with T multiplied by cycle_mult after every completed cycle.
double cosine_restart_lr(std::int64_t step, const TrainSchedule& schedule,
                         int steps_per_epoch = 1);

struct MixupDraw {
  double lambda = 1.0;
  std::vector<int> perm;
};

MixupDraw draw_mixup(int rows, double alpha, std::uint64_t seed);

// x' = lambda*x + (1-lambda)*x[perm], same for labels; source and target
// halves share one lambda and one permutation so pairings survive mixing.
PairedBatch mixup_batch(const PairedBatch& batch, const MixupDraw& draw);

// Scales every gradient by max_norm/norm when the global L2 norm across all
// parameters exceeds max_norm; direction is preserved. Returns the pre-clip
// norm. max_norm <= 0 leaves gradients untouched.
double clip_gradients(std::vector<Tensor>& params, double max_norm);

class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, double momentum, double weight_decay);
  // v = momentum*v + grad + weight_decay*p; p -= lr*v.
  void step(double lr);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double likelihood = 0;
  double kl_latent = 0;
  double tsl_term = 0;
  double aux_term = 0;
  double total = 0;
};

// Append-only training log, one row per optimizer step.
void write_history_csv(const std::vector<StepLog>& history, const std::string& path);

struct PretrainResult {
  double test_accuracy = 0.0;  // fraction in [0, 1] on the source test split
  std::vector<double> epoch_loss;
};

// Cross-entropy training on the reference-device split; the model is left
// trained but not frozen. Divergence raises a training error with the step.
PretrainResult pretrain_source(SplitModel& model, const PairedDataset& data,
                               const TrainSchedule& schedule, const MixupConfig& mixup = {});

struct TransferResult {
  std::vector<StepLog> history;
};

// Optimizes the target model on one device's paired training split. The
// source model must be frozen when the method consumes it; it is never
// modified. Pass nullptr for methods that train on labels alone.
TransferResult train_transfer(SplitModel& target, SplitModel* source,
                              const PairedDataset& data, const std::string& device,
                              const TransferConfig& config, const TrainSchedule& schedule,
                              const MixupConfig& mixup = {});

}  // namespace ltk
