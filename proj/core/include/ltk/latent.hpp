// SPDX-License-Identifier: Apache-2.0
#pragma once

// The Gaussian latent site: a hidden activation treated as the mean of an
// isotropic Gaussian with fixed shared std. Training samples through it with
// reparameterized noise; inference passes the mean straight through.

#include <cstdint>
#include <vector>

#include "ltk/tensor.hpp"

namespace ltk {

struct LatentGaussian {
  Tensor mean;         // [B, ...], batch axis first; carries gradient
  double sigma = 0.2;  // shared fixed std; no gradient
};

// Standard-normal draws plus the provenance needed to regenerate them.
struct NoiseDraw {
  Tensor epsilon;  // same shape as the mean it will be applied to
  std::uint64_t base_seed = 0;
  int epoch = 0;
  int batch_index = 0;
};

// One substream per example in the batch, keyed by (seed, epoch, batch,
// example); regenerating with the same key reproduces epsilon exactly.
NoiseDraw draw_noise(const std::vector<int>& shape, std::uint64_t base_seed, int epoch,
                     int batch_index);

// z = mu + sigma * epsilon. Gradient reaches the mean with coefficient 1;
// epsilon is a constant. sigma = 0 degenerates to the mean pass.
Tensor sample_latent(const LatentGaussian& latent, const NoiseDraw& noise);

// Deterministic pass at the mean; no sampling, no extra graph nodes.
Tensor inference_pass(const LatentGaussian& latent);

// (1 / (2 sigma^2)) * mean_b || mu_t[b] - mu_s[b] ||^2. The second argument
// acts as the prior: its gradient path is severed.
Tensor latent_kl(const Tensor& mu_t, const Tensor& mu_s, double sigma);

}  // namespace ltk
