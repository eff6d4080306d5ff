// SPDX-License-Identifier: Apache-2.0
#pragma once

// Neural network layers over the autodiff tensor engine. Each forward kernel
// records a single fused graph node, so the backward pass touches one closure
// per layer instead of a chain of elementwise ops.

#include <cstdint>
#include <vector>

#include "ltk/tensor.hpp"

namespace ltk {

enum class Mode { train, eval };

enum class LayerKind : int {
  dense = 1,
  conv2d = 2,
  batchnorm = 3,
  relu = 4,
  maxpool = 5,
  avgpool = 6,
  flatten = 7,
};

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // dense
  int units_in = 0;
  int units_out = 0;
  // conv2d (in_channels/out_channels), pools reuse kernel/stride
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  // batchnorm
  int channels = 0;
  double epsilon = 1e-5;
  double momentum = 0.1;

  static LayerSpec dense(int in, int out);
  static LayerSpec conv2d(int in_ch, int out_ch, int kernel, int stride = 1,
                          int padding = 0);
  static LayerSpec batchnorm(int channels, double epsilon = 1e-5,
                             double momentum = 0.1);
  static LayerSpec relu();
  static LayerSpec maxpool(int kernel, int stride);
  static LayerSpec avgpool(int kernel, int stride);
  static LayerSpec flatten();

  // Throws a config error when hyperparameters contradict the kind.
  void validate() const;
};

// Stateless forward kernels. Shapes are checked and reported by axis name.
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      int stride, int padding);
// input [B,C,H,W] or [B,C]; normalizes per channel. Train mode needs B >= 2,
// uses biased batch variance for normalization and stores the unbiased value
// into running_var. running_* are plain state, never graph nodes.
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, Mode mode,
                         double epsilon, double momentum);
// Ties inside a window resolve to the first maximum in row-major scan order.
Tensor maxpool_forward(const Tensor& input, int kernel, int stride);
Tensor avgpool_forward(const Tensor& input, int kernel, int stride);
Tensor flatten_forward(const Tensor& input);

// Output extent for one spatial axis; config error when not integral.
int conv_out_extent(int in, int kernel, int stride, int padding, const char* what);

// A configured layer instance owning its parameters and, for batchnorm, its
// running statistics.
class Layer {
 public:
  explicit Layer(LayerSpec spec);

  // Seeds are derived per layer index by the model; weights use He-uniform.
  void init_params(std::uint64_t seed);

  Tensor forward(const Tensor& x, Mode mode);

  const LayerSpec& spec() const { return spec_; }
  // Trainable parameters, in serialization order.
  std::vector<Tensor> parameters();
  // Non-trainable state (batchnorm running stats), in serialization order.
  std::vector<Tensor> state();

  Layer clone() const;

 private:
  LayerSpec spec_;
  Tensor weight_;        // dense [I,O]; conv2d [F, C*kH*kW]
  Tensor bias_;          // dense [O]; conv2d [F]
  Tensor gamma_, beta_;  // batchnorm [C]
  Tensor running_mean_, running_var_;
};

}  // namespace ltk
