// SPDX-License-Identifier: Apache-2.0
#pragma once

// A sequential CNN classifier split at a configurable latent site: the layers
// up to and including one batchnorm produce the latent mean, the remaining
// layers map a latent value to class logits. Checkpoints round-trip bit-exact.

#include <cstdint>
#include <string>
#include <vector>

#include "ltk/layers.hpp"

namespace ltk {

struct ModelConfig {
  int in_channels = 1;
  int height = 40;
  int width = 64;
  int classes = 10;
  std::vector<int> channels = {4, 8, 16};  // conv filters per block
  int kernel = 3;
  // 1-based conv block whose batchnorm output carries the latent variable.
  int latent_block = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

class SplitModel {
 public:
  static SplitModel build(const ModelConfig& cfg);

  // Full pass, latent taken at its mean.
  Tensor forward(const Tensor& x, Mode mode);
  // Layers up to and including the latent-site batchnorm; output is the
  // latent mean with shape [B, C, H, W] at that depth.
  Tensor forward_pre(const Tensor& x, Mode mode);
  // Remaining layers, from a latent value to logits.
  Tensor forward_post(const Tensor& z, Mode mode);

  std::vector<Tensor> parameters();
  void zero_grad();
  // Clears requires_grad on every parameter; a frozen model records no graph.
  void freeze();
  void unfreeze();
  bool frozen();

  SplitModel clone() const;

  // Moves the latent site to another conv block's batchnorm. Weights are
  // untouched; the latent placement is a transfer-time choice, so one trained
  // checkpoint serves every placement.
  void set_latent_block(int block);

  void save(const std::string& path) const;
  static SplitModel load(const std::string& path);

  int latent_index() const { return latent_index_; }
  // Shape of the latent mean for a given batch size, without running a pass.
  std::vector<int> latent_shape(int batch) const;
  const ModelConfig& config() const { return cfg_; }
  std::vector<Layer>& layers() { return layers_; }

 private:
  ModelConfig cfg_;
  std::vector<Layer> layers_;
  int latent_index_ = -1;  // index into layers_ of the latent-site batchnorm
};

}  // namespace ltk
