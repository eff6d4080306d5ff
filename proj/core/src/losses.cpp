// SPDX-License-Identifier: Apache-2.0
#include "ltk/losses.hpp"

#include <cmath>
#include <iostream>
#include <memory>

namespace ltk {

namespace {

std::shared_ptr<detail::Node> make_node(std::vector<int> shape) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  return n;
}

void require_logit_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape() != b.shape()) {
    raise(ErrorCategory::dimension, std::string(op) + ": logit shapes " +
                                        shape_str(a.shape()) + " and " +
                                        shape_str(b.shape()) + " must match as [B,K]");
  }
}

// Row-wise softmax with max-subtraction; writes probabilities into out.
void softmax_rows(const std::vector<double>& logits, int b, int k, double inv_t,
                  std::vector<double>& out) {
  out.resize(logits.size());
  for (int r = 0; r < b; ++r) {
    const double* row = logits.data() + static_cast<std::size_t>(r) * k;
    double* po = out.data() + static_cast<std::size_t>(r) * k;
    double mx = row[0] * inv_t;
    for (int c = 1; c < k; ++c) mx = std::max(mx, row[c] * inv_t);
    double denom = 0.0;
    for (int c = 0; c < k; ++c) {
      po[c] = std::exp(row[c] * inv_t - mx);
      denom += po[c];
    }
    for (int c = 0; c < k; ++c) po[c] /= denom;
  }
}

}  // namespace

const char* transfer_method_name(TransferMethod m) {
  switch (m) {
    case TransferMethod::none: return "none";
    case TransferMethod::onehot_finetune: return "onehot";
    case TransferMethod::tsl: return "tsl";
    case TransferMethod::fitnet: return "fitnet";
    case TransferMethod::at: return "at";
    case TransferMethod::sp: return "sp";
    case TransferMethod::vbkt: return "vbkt";
  }
  return "unknown";
}

TransferMethod parse_transfer_method(const std::string& name) {
  if (name == "none") return TransferMethod::none;
  if (name == "onehot" || name == "onehot_finetune") return TransferMethod::onehot_finetune;
  if (name == "tsl") return TransferMethod::tsl;
  if (name == "fitnet") return TransferMethod::fitnet;
  if (name == "at") return TransferMethod::at;
  if (name == "sp") return TransferMethod::sp;
  if (name == "vbkt") return TransferMethod::vbkt;
  raise(ErrorCategory::config, "unknown transfer method '" + name + "'");
}

void TransferConfig::validate() const {
  if (sigma <= 0) raise(ErrorCategory::config, "sigma must be positive");
  if (sample_sigma < 0) raise(ErrorCategory::config, "sample sigma must be non-negative");
  if (temperature <= 0) raise(ErrorCategory::config, "temperature must be positive");
  if (aux_weight < 0) raise(ErrorCategory::config, "aux weight must be non-negative");
  bool blended = combine_with_tsl || method == TransferMethod::tsl;
  if (blended && std::abs(tsl_weight + ce_weight - 1.0) > 1e-12) {
    raise(ErrorCategory::config, "tsl and ce weights must sum to 1, got " +
                                     std::to_string(tsl_weight + ce_weight));
  }
}

// ---------------------------------------------------------------------------
// cross entropy

SoftmaxCeResult softmax_cross_entropy(const Tensor& logits, const Tensor& labels) {
  require_logit_pair(logits, labels, "cross_entropy");
  const int b = logits.dim(0), k = logits.dim(1);
  const auto& lv = labels.values();
  for (int r = 0; r < b; ++r) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) s += lv[static_cast<std::size_t>(r) * k + c];
    if (std::abs(s - 1.0) > 1e-6) {
      raise(ErrorCategory::validation,
            "label row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }

  auto probs = std::make_shared<std::vector<double>>();
  softmax_rows(logits.values(), b, k, 1.0, *probs);

  auto out = make_node({1});
  double loss = 0.0;
  const auto& xv = logits.values();
  for (int r = 0; r < b; ++r) {
    const double* row = xv.data() + static_cast<std::size_t>(r) * k;
    double mx = row[0];
    for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < k; ++c) denom += std::exp(row[c] - mx);
    double lse = mx + std::log(denom);
    for (int c = 0; c < k; ++c) {
      double t = lv[static_cast<std::size_t>(r) * k + c];
      if (t != 0.0) loss -= t * (row[c] - lse);
    }
  }
  out->value[0] = loss / b;

  out->requires_grad = logits.requires_grad();
  if (out->requires_grad) {
    auto targets = std::make_shared<std::vector<double>>(labels.values());
    out->parents = {logits.node_ptr()};
    out->backprop = [probs, targets, b, k](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      double g = self.grad[0] / b;
      for (std::size_t i = 0; i < p.grad.size(); ++i)
        p.grad[i] += g * ((*probs)[i] - (*targets)[i]);
    };
  }

  SoftmaxCeResult res;
  res.loss = Tensor::wrap(std::move(out));
  res.probs = Tensor::from_values({b, k}, *probs);
  return res;
}

// ---------------------------------------------------------------------------
// teacher/student soft-label loss

Tensor tsl_loss(const Tensor& student_logits, const Tensor& teacher_logits,
                double temperature) {
  if (temperature <= 0) raise(ErrorCategory::config, "temperature must be positive");
  require_logit_pair(student_logits, teacher_logits, "tsl");
  const int b = student_logits.dim(0), k = student_logits.dim(1);
  const double inv_t = 1.0 / temperature;

  auto ps = std::make_shared<std::vector<double>>();
  auto pt = std::make_shared<std::vector<double>>();
  softmax_rows(student_logits.values(), b, k, inv_t, *ps);
  softmax_rows(teacher_logits.values(), b, k, inv_t, *pt);

  auto out = make_node({1});
  double kl = 0.0;
  for (std::size_t i = 0; i < ps->size(); ++i) {
    double t = (*pt)[i];
    if (t > 0.0) kl += t * (std::log(t) - std::log((*ps)[i]));
  }
  out->value[0] = temperature * temperature * kl / b;

  out->requires_grad = student_logits.requires_grad();
  if (out->requires_grad) {
    out->parents = {student_logits.node_ptr()};
    out->backprop = [ps, pt, b, temperature](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      double g = self.grad[0] * temperature / b;
      for (std::size_t i = 0; i < p.grad.size(); ++i)
        p.grad[i] += g * ((*ps)[i] - (*pt)[i]);
    };
  }
  return Tensor::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// hidden-state losses

Tensor fitnet_loss(const Tensor& student_hidden, const Tensor& teacher_hidden) {
  if (student_hidden.shape() != teacher_hidden.shape()) {
    raise(ErrorCategory::dimension, "hidden shapes differ: " +
                                        shape_str(student_hidden.shape()) + " vs " +
                                        shape_str(teacher_hidden.shape()));
  }
  const int b = student_hidden.dim(0);
  Tensor d = sub(student_hidden, detach(teacher_hidden));
  return scale(sum(mul(d, d)), 1.0 / b);
}

Tensor at_loss(const Tensor& student_fmap, const Tensor& teacher_fmap) {
  if (student_fmap.ndim() != 4 || teacher_fmap.ndim() != 4 ||
      student_fmap.dim(0) != teacher_fmap.dim(0) ||
      student_fmap.dim(2) != teacher_fmap.dim(2) ||
      student_fmap.dim(3) != teacher_fmap.dim(3)) {
    raise(ErrorCategory::dimension, "attention maps need matching batch and spatial dims, got " +
                                        shape_str(student_fmap.shape()) + " vs " +
                                        shape_str(teacher_fmap.shape()));
  }
  const int b = student_fmap.dim(0);
  const int hw = student_fmap.dim(2) * student_fmap.dim(3);

  bool zero_s = false, zero_t = false;
  Tensor as = row_l2_normalize(channel_sumsq(student_fmap), &zero_s);
  Tensor at = row_l2_normalize(channel_sumsq(detach(teacher_fmap)), &zero_t);

  if (zero_s || zero_t) {
    std::cerr << "warning: zero-energy attention map, affected examples contribute no loss\n";
    // Mask rows where either side's map had no energy so a one-sided zero
    // cannot masquerade as a unit-distance target.
    std::vector<double> mask(static_cast<std::size_t>(b) * hw, 1.0);
    auto row_energy = [hw](const Tensor& t, int row) {
      double s = 0.0;
      for (int i = 0; i < hw; ++i) {
        double v = t[static_cast<std::int64_t>(row) * hw + i];
        s += v * v;
      }
      return s;
    };
    for (int r = 0; r < b; ++r) {
      if (row_energy(as, r) == 0.0 || row_energy(at, r) == 0.0) {
        for (int i = 0; i < hw; ++i) mask[static_cast<std::size_t>(r) * hw + i] = 0.0;
      }
    }
    Tensor m = Tensor::from_values({b, hw}, std::move(mask));
    Tensor d = mul(sub(as, at), m);
    return scale(sum(mul(d, d)), 1.0 / b);
  }

  Tensor d = sub(as, at);
  return scale(sum(mul(d, d)), 1.0 / b);
}

Tensor sp_loss(const Tensor& student_hidden, const Tensor& teacher_hidden) {
  if (student_hidden.ndim() != 2 || teacher_hidden.ndim() != 2 ||
      student_hidden.shape() != teacher_hidden.shape()) {
    raise(ErrorCategory::dimension, "similarity transfer needs matching [B,M] hiddens, got " +
                                        shape_str(student_hidden.shape()) + " vs " +
                                        shape_str(teacher_hidden.shape()));
  }
  const int b = student_hidden.dim(0);
  if (b < 2) {
    raise(ErrorCategory::dimension,
          "similarity transfer needs a batch of at least 2, got " + std::to_string(b));
  }
  Tensor gs = row_l2_normalize(matmul_nt(student_hidden, student_hidden));
  Tensor th = detach(teacher_hidden);
  Tensor gt = row_l2_normalize(matmul_nt(th, th));
  Tensor d = sub(gs, gt);
  return scale(sum(mul(d, d)), 1.0 / (static_cast<double>(b) * b));
}

// ---------------------------------------------------------------------------
// composition and dispatch

LossBreakdown combine_with_tsl(const LossBreakdown& task, const Tensor& tsl_term,
                               const TransferConfig& cfg) {
  LossBreakdown out = task;
  out.tsl_term = tsl_term;
  out.likelihood = add(scale(tsl_term, cfg.tsl_weight), scale(task.likelihood, cfg.ce_weight));
  out.total = out.likelihood;
  if (task.kl_latent.defined()) out.total = add(out.total, task.kl_latent);
  if (task.aux_term.defined())
    out.total = add(out.total, scale(task.aux_term, cfg.aux_weight));
  return out;
}

namespace {

void require_frozen_source(SplitModel& source) {
  if (!source.frozen())
    raise(ErrorCategory::usage, "source model must be frozen during transfer");
}

void require_paired(const PairedBatch& batch) {
  if (!batch.x_source.defined())
    raise(ErrorCategory::data, "batch has no paired source inputs");
  if (batch.x_source.dim(0) != batch.x_target.dim(0)) {
    raise(ErrorCategory::data,
          "pairing broken: " + std::to_string(batch.x_source.dim(0)) + " source rows vs " +
              std::to_string(batch.x_target.dim(0)) + " target rows");
  }
}

Tensor zero_scalar() { return Tensor::scalar(0.0); }

LossBreakdown vbkt_core(SplitModel& target_model, SplitModel& source_model,
                        const PairedBatch& batch, const TransferConfig& cfg,
                        const NoiseDraw& noise, Mode student_mode) {
  require_paired(batch);
  require_frozen_source(source_model);

  Tensor mu_t = target_model.forward_pre(batch.x_target, student_mode);
  Tensor mu_s = source_model.forward_pre(batch.x_source, Mode::eval);

  LatentGaussian site{mu_t, cfg.sample_sigma};
  Tensor z = sample_latent(site, noise);
  Tensor logits = target_model.forward_post(z, student_mode);

  LossBreakdown out;
  out.likelihood = softmax_cross_entropy(logits, batch.y).loss;
  out.kl_latent = latent_kl(mu_t, mu_s, cfg.sigma);
  out.tsl_term = zero_scalar();
  out.aux_term = zero_scalar();
  out.total = add(out.likelihood, out.kl_latent);

  if (cfg.combine_with_tsl) {
    Tensor teacher_logits = source_model.forward_post(mu_s, Mode::eval);
    out = combine_with_tsl(out, tsl_loss(logits, teacher_logits, cfg.temperature), cfg);
  }
  return out;
}

}  // namespace

LossBreakdown vbkt_loss(SplitModel& target_model, SplitModel& source_model,
                        const PairedBatch& batch, const TransferConfig& cfg,
                        const NoiseDraw& noise, Mode student_mode) {
  cfg.validate();
  return vbkt_core(target_model, source_model, batch, cfg, noise, student_mode);
}

LossBreakdown transfer_loss(SplitModel& target_model, SplitModel* source_model,
                            const PairedBatch& batch, const TransferConfig& cfg,
                            const NoiseKey& noise_key, Mode student_mode) {
  cfg.validate();
  const bool needs_source = cfg.method != TransferMethod::none &&
                            cfg.method != TransferMethod::onehot_finetune;
  if (needs_source && source_model == nullptr)
    raise(ErrorCategory::usage, std::string(transfer_method_name(cfg.method)) +
                                    " transfer needs a source model");

  if (cfg.method == TransferMethod::vbkt) {
    NoiseDraw noise =
        draw_noise(target_model.latent_shape(batch.x_target.dim(0)), noise_key.base_seed,
                   noise_key.epoch, noise_key.batch_index);
    return vbkt_core(target_model, *source_model, batch, cfg, noise, student_mode);
  }

  LossBreakdown out;
  out.kl_latent = zero_scalar();
  out.tsl_term = zero_scalar();
  out.aux_term = zero_scalar();

  if (cfg.method == TransferMethod::none ||
      cfg.method == TransferMethod::onehot_finetune) {
    Tensor logits = target_model.forward(batch.x_target, student_mode);
    out.likelihood = softmax_cross_entropy(logits, batch.y).loss;
    out.total = out.likelihood;
    return out;
  }

  require_paired(batch);
  require_frozen_source(*source_model);
  const Tensor& teacher_input = cfg.teacher_on_target ? batch.x_target : batch.x_source;

  Tensor mu_t = target_model.forward_pre(batch.x_target, student_mode);
  Tensor logits = target_model.forward_post(mu_t, student_mode);
  out.likelihood = softmax_cross_entropy(logits, batch.y).loss;

  switch (cfg.method) {
    case TransferMethod::tsl: {
      Tensor teacher_logits = source_model->forward(teacher_input, Mode::eval);
      return combine_with_tsl(out, tsl_loss(logits, teacher_logits, cfg.temperature), cfg);
    }
    case TransferMethod::fitnet: {
      Tensor mu_s = source_model->forward_pre(teacher_input, Mode::eval);
      out.aux_term = fitnet_loss(mu_t, mu_s);
      break;
    }
    case TransferMethod::at: {
      Tensor mu_s = source_model->forward_pre(teacher_input, Mode::eval);
      out.aux_term = at_loss(mu_t, mu_s);
      break;
    }
    case TransferMethod::sp: {
      Tensor mu_s = source_model->forward_pre(teacher_input, Mode::eval);
      out.aux_term = sp_loss(flatten_forward(mu_t), flatten_forward(mu_s));
      break;
    }
    default:
      raise(ErrorCategory::usage, "unhandled transfer method");
  }

  out.total = add(out.likelihood, scale(out.aux_term, cfg.aux_weight));
  if (cfg.combine_with_tsl) {
    Tensor teacher_logits = source_model->forward(teacher_input, Mode::eval);
    out = combine_with_tsl(out, tsl_loss(logits, teacher_logits, cfg.temperature), cfg);
  }
  return out;
}

}  // namespace ltk
