// SPDX-License-Identifier: Apache-2.0
#include "ltk/trainer.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ltk/eval.hpp"
#include "ltk/rng.hpp"

namespace ltk {

namespace {

constexpr double kPi = 3.14159265358979323846;

double scalar_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

// Unpaired batches over one sample list with the trailing-singleton fold.
std::vector<PairedBatch> plain_batches(const std::vector<SceneSample>& samples, int height,
                                       int width, int classes, int batch_size,
                                       std::uint64_t shuffle_seed) {
  if (batch_size < 1) raise(ErrorCategory::usage, "batch size must be at least 1");
  if (samples.empty()) raise(ErrorCategory::data, "cannot batch an empty sample list");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(order);

  std::vector<std::size_t> bounds;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size))
    bounds.push_back(start);
  bounds.push_back(order.size());
  if (bounds.size() >= 3 && bounds[bounds.size() - 1] - bounds[bounds.size() - 2] == 1)
    bounds.erase(bounds.end() - 2);

  std::vector<PairedBatch> batches;
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
    std::vector<SceneSample> rows;
    for (std::size_t i = bounds[b]; i < bounds[b + 1]; ++i) rows.push_back(samples[order[i]]);
    PairedBatch batch;
    batch.x_target = stack_features(rows, height, width);
    batch.y = one_hot(labels_of(rows), classes);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace

void TrainSchedule::validate() const {
  if (!(min_lr < max_lr))
    raise(ErrorCategory::config, "schedule requires min_lr < max_lr");
  if (min_lr <= 0.0) raise(ErrorCategory::config, "learning rates must be positive");
  if (cycle_length_epochs < 1) raise(ErrorCategory::config, "cycle length must be at least 1 epoch");
  if (cycle_mult < 1) raise(ErrorCategory::config, "cycle multiplier must be at least 1");
  if (total_epochs < 1) raise(ErrorCategory::config, "total epochs must be at least 1");
  if (batch_size < 1) raise(ErrorCategory::config, "batch size must be at least 1");
  if (momentum < 0.0 || momentum >= 1.0)
    raise(ErrorCategory::config, "momentum must lie in [0, 1)");
  if (weight_decay < 0.0) raise(ErrorCategory::config, "weight decay must be non-negative");
  if (grad_clip_norm < 0.0 || !std::isfinite(grad_clip_norm))
    raise(ErrorCategory::config, "gradient clip norm must be finite and non-negative");
}

void MixupConfig::validate() const {
  if (enabled && !(alpha > 0.0))
    raise(ErrorCategory::config, "mixup alpha must be positive when mixup is enabled");
}

double cosine_restart_lr(std::int64_t step, const TrainSchedule& schedule, int steps_per_epoch) {
  schedule.validate();
  if (step < 0) raise(ErrorCategory::usage, "schedule step must be non-negative");
  if (steps_per_epoch < 1) raise(ErrorCategory::usage, "steps per epoch must be at least 1");
  std::int64_t cycle =
      static_cast<std::int64_t>(schedule.cycle_length_epochs) * steps_per_epoch;
  std::int64_t start = 0;
  while (step - start >= cycle) {
    start += cycle;
    if (cycle > (std::int64_t{1} << 50) / std::max(schedule.cycle_mult, 1)) break;
    cycle *= schedule.cycle_mult;
  }
  double t = static_cast<double>(step - start) / static_cast<double>(cycle);
  return schedule.min_lr + 0.5 * (schedule.max_lr - schedule.min_lr) * (1.0 + std::cos(kPi * t));
}

MixupDraw draw_mixup(int rows, double alpha, std::uint64_t seed) {
  if (rows < 1) raise(ErrorCategory::usage, "mixup needs at least one row");
  if (!(alpha > 0.0)) raise(ErrorCategory::config, "mixup alpha must be positive");
  Rng rng(seed);
  MixupDraw draw;
  draw.lambda = rng.beta(alpha, alpha);
  draw.perm.resize(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) draw.perm[static_cast<std::size_t>(i)] = i;
  rng.shuffle(draw.perm);
  return draw;
}

namespace {

Tensor mix_rows(const Tensor& x, const MixupDraw& draw) {
  std::size_t rows = static_cast<std::size_t>(x.dim(0));
  std::size_t stride = static_cast<std::size_t>(x.numel()) / rows;
  Tensor out = Tensor::zeros(x.shape());
  const auto& src = x.values();
  auto& dst = out.values();
  double l = draw.lambda;
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t p = static_cast<std::size_t>(draw.perm[r]);
    for (std::size_t c = 0; c < stride; ++c)
      dst[r * stride + c] = l * src[r * stride + c] + (1.0 - l) * src[p * stride + c];
  }
  return out;
}

}  // namespace

PairedBatch mixup_batch(const PairedBatch& batch, const MixupDraw& draw) {
  if (!batch.x_target.defined() || !batch.y.defined())
    raise(ErrorCategory::usage, "mixup requires a populated batch");
  int rows = batch.x_target.dim(0);
  if (static_cast<int>(draw.perm.size()) != rows)
    raise(ErrorCategory::dimension, "mixup permutation covers " +
                                        std::to_string(draw.perm.size()) + " rows, batch has " +
                                        std::to_string(rows));
  std::vector<bool> seen(draw.perm.size(), false);
  for (int p : draw.perm) {
    if (p < 0 || p >= rows || seen[static_cast<std::size_t>(p)])
      raise(ErrorCategory::validation, "mixup permutation is not a permutation");
    seen[static_cast<std::size_t>(p)] = true;
  }
  if (draw.lambda < 0.0 || draw.lambda > 1.0)
    raise(ErrorCategory::validation, "mixup lambda must lie in [0, 1]");
  PairedBatch out;
  out.x_target = mix_rows(batch.x_target, draw);
  out.y = mix_rows(batch.y, draw);
  if (batch.x_source.defined()) out.x_source = mix_rows(batch.x_source, draw);
  return out;
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  if (momentum_ < 0.0 || momentum_ >= 1.0)
    raise(ErrorCategory::config, "momentum must lie in [0, 1)");
  if (weight_decay_ < 0.0) raise(ErrorCategory::config, "weight decay must be non-negative");
  velocity_.reserve(params_.size());
  for (const auto& p : params_)
    velocity_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
}

double clip_gradients(std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  double norm = std::sqrt(sq);
  if (max_norm <= 0.0 || norm <= max_norm || !std::isfinite(norm)) return norm;
  double scale = max_norm / norm;
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.grad_mut()) g *= scale;
  }
  return norm;
}

void SgdOptimizer::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    auto& v = velocity_[i];
    auto& w = p.values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j] + weight_decay_ * w[j];
      w[j] -= lr * v[j];
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void write_history_csv(const std::vector<StepLog>& history, const std::string& path) {
  std::ofstream os(path);
  if (!os) raise(ErrorCategory::io, "cannot open '" + path + "' for writing");
  os << "step,epoch,lr,likelihood,kl_latent,tsl_term,aux_term,total\n";
  char line[360];
  for (const auto& h : history) {
    std::snprintf(line, sizeof(line),
                  "%" PRId64 ",%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", h.step, h.epoch, h.lr,
                  h.likelihood, h.kl_latent, h.tsl_term, h.aux_term, h.total);
    os << line;
  }
  if (!os) raise(ErrorCategory::io, "write to '" + path + "' failed");
}

PretrainResult pretrain_source(SplitModel& model, const PairedDataset& data,
                               const TrainSchedule& schedule, const MixupConfig& mixup) {
  schedule.validate();
  mixup.validate();
  if (model.frozen()) raise(ErrorCategory::usage, "cannot pretrain a frozen model");
  const auto& cfg = data.cfg;
  auto params = model.parameters();
  SgdOptimizer opt(params, schedule.momentum, schedule.weight_decay);

  PretrainResult result;
  std::int64_t step = 0;
  int steps_per_epoch = 0;
  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    auto batches = plain_batches(data.source.train, cfg.height, cfg.width, cfg.classes,
                                 schedule.batch_size,
                                 mix_seed(schedule.seed, seed_tag::epoch_shuffle, epoch));
    if (steps_per_epoch == 0) steps_per_epoch = static_cast<int>(batches.size());
    double epoch_ce = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      PairedBatch batch = batches[b];
      if (mixup.enabled) {
        auto draw = draw_mixup(batch.x_target.dim(0), mixup.alpha,
                               mix_seed(schedule.seed, seed_tag::mixup, epoch, b));
        batch = mixup_batch(batch, draw);
      }
      opt.zero_grad();
      auto ce = softmax_cross_entropy(model.forward(batch.x_target, Mode::train), batch.y);
      double value = ce.loss.item();
      if (!std::isfinite(value))
        raise(ErrorCategory::training,
              "pretraining loss diverged at step " + std::to_string(step));
      ce.loss.backward();
      clip_gradients(params, schedule.grad_clip_norm);
      opt.step(cosine_restart_lr(step, schedule, steps_per_epoch));
      epoch_ce += value;
      ++step;
    }
    result.epoch_loss.push_back(epoch_ce / static_cast<double>(batches.size()));
  }
  result.test_accuracy = evaluate_accuracy(model, data.source.test);
  return result;
}

TransferResult train_transfer(SplitModel& target, SplitModel* source,
                              const PairedDataset& data, const std::string& device,
                              const TransferConfig& config, const TrainSchedule& schedule,
                              const MixupConfig& mixup) {
  schedule.validate();
  config.validate();
  mixup.validate();
  if (target.frozen()) raise(ErrorCategory::usage, "cannot train a frozen target model");
  if (source != nullptr && !source->frozen())
    raise(ErrorCategory::usage, "the source model must be frozen during transfer");

  auto params = target.parameters();
  SgdOptimizer opt(params, schedule.momentum, schedule.weight_decay);
  TransferResult result;
  std::int64_t step = 0;
  int steps_per_epoch = 0;
  for (int epoch = 0; epoch < schedule.total_epochs; ++epoch) {
    auto batches =
        pair_batches(data, device, schedule.batch_size, mix_seed(schedule.seed, epoch));
    if (steps_per_epoch == 0) steps_per_epoch = static_cast<int>(batches.size());
    for (std::size_t b = 0; b < batches.size(); ++b) {
      PairedBatch batch = batches[b];
      if (mixup.enabled) {
        auto draw = draw_mixup(batch.x_target.dim(0), mixup.alpha,
                               mix_seed(schedule.seed, seed_tag::mixup, epoch, b));
        batch = mixup_batch(batch, draw);
      }
      opt.zero_grad();
      NoiseKey key{schedule.seed, epoch, static_cast<int>(b)};
      LossBreakdown loss = transfer_loss(target, source, batch, config, key);

      StepLog log;
      log.step = step;
      log.epoch = epoch;
      log.lr = cosine_restart_lr(step, schedule, steps_per_epoch);
      log.likelihood = scalar_or_zero(loss.likelihood);
      log.kl_latent = scalar_or_zero(loss.kl_latent);
      log.tsl_term = scalar_or_zero(loss.tsl_term);
      log.aux_term = scalar_or_zero(loss.aux_term);
      log.total = scalar_or_zero(loss.total);
      if (!std::isfinite(log.total))
        raise(ErrorCategory::training,
              "transfer loss diverged at step " + std::to_string(step));
      loss.total.backward();
      clip_gradients(params, schedule.grad_clip_norm);
      opt.step(log.lr);
      result.history.push_back(log);
      ++step;
    }
  }
  return result;
}

}  // namespace ltk
