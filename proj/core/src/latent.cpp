// SPDX-License-Identifier: Apache-2.0
#include "ltk/latent.hpp"

#include "ltk/rng.hpp"

namespace ltk {

NoiseDraw draw_noise(const std::vector<int>& shape, std::uint64_t base_seed, int epoch,
                     int batch_index) {
  if (shape.empty()) raise(ErrorCategory::dimension, "noise draw needs a batch axis");
  NoiseDraw out;
  out.base_seed = base_seed;
  out.epoch = epoch;
  out.batch_index = batch_index;
  out.epsilon = Tensor::zeros(shape);

  const int batch = shape[0];
  const std::int64_t per = out.epsilon.numel() / batch;
  auto& eps = out.epsilon.values();
  for (int b = 0; b < batch; ++b) {
    Rng rng(mix_seed(base_seed, seed_tag::latent_noise,
                     static_cast<std::uint64_t>(epoch),
                     static_cast<std::uint64_t>(batch_index),
                     static_cast<std::uint64_t>(b)));
    double* row = eps.data() + static_cast<std::size_t>(b) * per;
    for (std::int64_t i = 0; i < per; ++i) row[i] = rng.normal();
  }
  return out;
}

Tensor sample_latent(const LatentGaussian& latent, const NoiseDraw& noise) {
  if (latent.sigma < 0)
    raise(ErrorCategory::config, "latent sigma must be non-negative");
  if (noise.epsilon.shape() != latent.mean.shape()) {
    raise(ErrorCategory::dimension,
          "noise shape " + shape_str(noise.epsilon.shape()) +
              " does not match latent mean " + shape_str(latent.mean.shape()));
  }
  return add_scaled(latent.mean, noise.epsilon, latent.sigma);
}

Tensor inference_pass(const LatentGaussian& latent) { return latent.mean; }

Tensor latent_kl(const Tensor& mu_t, const Tensor& mu_s, double sigma) {
  if (sigma <= 0) raise(ErrorCategory::config, "latent sigma must be positive");
  if (mu_t.shape() != mu_s.shape()) {
    raise(ErrorCategory::dimension, "latent means differ in shape: " +
                                        shape_str(mu_t.shape()) + " vs " +
                                        shape_str(mu_s.shape()));
  }
  const int batch = mu_t.dim(0);
  Tensor d = sub(mu_t, detach(mu_s));
  return scale(sum(mul(d, d)), 1.0 / (2.0 * sigma * sigma * batch));
}

}  // namespace ltk
