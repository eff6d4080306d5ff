// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training objectives: cross entropy, the variational transfer objective, and
// four reference transfer losses, all reported through a common breakdown.

#include <string>

#include "ltk/batch.hpp"
#include "ltk/latent.hpp"
#include "ltk/model.hpp"
#include "ltk/tensor.hpp"

namespace ltk {

enum class TransferMethod {
  none,             // train on target data only
  onehot_finetune,  // source init + hard-label finetune
  tsl,              // teacher/student soft labels on logits
  fitnet,           // hidden embedding L2
  at,               // attention map transfer
  sp,               // pairwise similarity transfer
  vbkt,             // variational latent transfer
};

const char* transfer_method_name(TransferMethod m);
TransferMethod parse_transfer_method(const std::string& name);

struct TransferConfig {
  TransferMethod method = TransferMethod::vbkt;
  // Weight of the latent pull term, as 1/(2 sigma^2). Decoupled from the
  // sampling std so the two roles can be swept independently.
  double sigma = 0.2;
  double sample_sigma = 0.2;
  double temperature = 1.0;
  bool combine_with_tsl = false;
  double tsl_weight = 0.9;
  double ce_weight = 0.1;
  double aux_weight = 1.0;
  bool init_from_source = true;
  // Teacher reads the target-device input instead of its own paired capture.
  bool teacher_on_target = false;

  void validate() const;
};

struct LossBreakdown {
  Tensor likelihood;  // CE term, or the tsl/ce blend when combined
  Tensor kl_latent;
  Tensor tsl_term;
  Tensor aux_term;
  Tensor total;
};

struct SoftmaxCeResult {
  Tensor loss;   // scalar
  Tensor probs;  // [B, K], constant snapshot of softmax(logits)
};

// Mean negative log-likelihood under softmax, stabilized by row-max
// subtraction. Label rows must sum to 1 within 1e-6.
SoftmaxCeResult softmax_cross_entropy(const Tensor& logits, const Tensor& labels);

// T^2-scaled forward KL from teacher to student softmax at temperature T.
// Teacher logits are treated as constants.
Tensor tsl_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                double temperature);

// Mean squared distance between hidden activations, per example.
Tensor fitnet_loss(const Tensor& student_hidden, const Tensor& teacher_hidden);

// Normalized attention-map distance over [B,C,H,W] feature maps. Examples
// where either side's map has zero energy contribute zero.
Tensor at_loss(const Tensor& student_fmap, const Tensor& teacher_fmap);

// Distance between row-normalized Gram matrices of [B,M] hidden batches.
Tensor sp_loss(const Tensor& student_hidden, const Tensor& teacher_hidden);

// Replaces the likelihood with tsl_weight * tsl + ce_weight * CE and rebuilds
// the total; latent and aux terms pass through unchanged.
LossBreakdown combine_with_tsl(const LossBreakdown& task, const Tensor& tsl_term,
                               const TransferConfig& cfg);

// Identifies one training step's noise stream.
struct NoiseKey {
  std::uint64_t base_seed = 0;
  int epoch = 0;
  int batch_index = 0;
};

// The variational objective with an explicit noise draw (tests pin epsilon).
// student_mode selects batch statistics (train, the optimization path) or
// running statistics (eval, for loss reporting without state updates).
LossBreakdown vbkt_loss(SplitModel& target_model, SplitModel& source_model,
                        const PairedBatch& batch, const TransferConfig& cfg,
                        const NoiseDraw& noise, Mode student_mode = Mode::train);

// Method dispatch used by the trainer; draws vbkt noise from the key.
// source_model may be null only for method none / onehot_finetune.
LossBreakdown transfer_loss(SplitModel& target_model, SplitModel* source_model,
                            const PairedBatch& batch, const TransferConfig& cfg,
                            const NoiseKey& noise_key, Mode student_mode = Mode::train);

}  // namespace ltk
