// SPDX-License-Identifier: Apache-2.0
#include "ltk/layers.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <utility>

#include "ltk/rng.hpp"

namespace ltk {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

std::shared_ptr<detail::Node> make_node(std::vector<int> shape) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  n->shape = std::move(shape);
  return n;
}

void require_ndim(const Tensor& t, int nd, const char* op, const char* what) {
  if (t.ndim() != nd) {
    raise(ErrorCategory::dimension, std::string(op) + ": " + what + " must be " +
                                        std::to_string(nd) + "-D, got " +
                                        shape_str(t.shape()));
  }
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

LayerSpec LayerSpec::dense(int in, int out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.units_in = in;
  s.units_out = out;
  s.validate();
  return s;
}

LayerSpec LayerSpec::conv2d(int in_ch, int out_ch, int kernel, int stride, int padding) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.validate();
  return s;
}

LayerSpec LayerSpec::batchnorm(int channels, double epsilon, double momentum) {
  LayerSpec s;
  s.kind = LayerKind::batchnorm;
  s.channels = channels;
  s.epsilon = epsilon;
  s.momentum = momentum;
  s.validate();
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec LayerSpec::maxpool(int kernel, int stride) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.kernel = kernel;
  s.stride = stride;
  s.validate();
  return s;
}

LayerSpec LayerSpec::avgpool(int kernel, int stride) {
  LayerSpec s;
  s.kind = LayerKind::avgpool;
  s.kernel = kernel;
  s.stride = stride;
  s.validate();
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

void LayerSpec::validate() const {
  auto bad = [this](const std::string& msg) {
    raise(ErrorCategory::config,
          std::string(layer_kind_name(kind)) + " layer: " + msg);
  };
  switch (kind) {
    case LayerKind::dense:
      if (units_in <= 0 || units_out <= 0) bad("units must be positive");
      break;
    case LayerKind::conv2d:
      if (in_channels <= 0 || out_channels <= 0) bad("channel counts must be positive");
      if (kernel <= 0) bad("kernel size must be positive");
      if (stride <= 0) bad("stride must be positive");
      if (padding < 0) bad("padding must be non-negative");
      break;
    case LayerKind::batchnorm:
      if (channels <= 0) bad("channel count must be positive");
      if (epsilon <= 0) bad("epsilon must be positive");
      if (momentum <= 0 || momentum >= 1) bad("momentum must lie in (0, 1)");
      break;
    case LayerKind::maxpool:
    case LayerKind::avgpool:
      if (kernel <= 0) bad("kernel size must be positive");
      if (stride <= 0) bad("stride must be positive");
      break;
    case LayerKind::relu:
    case LayerKind::flatten:
      break;
  }
}

int conv_out_extent(int in, int kernel, int stride, int padding, const char* what) {
  int padded = in + 2 * padding;
  if (kernel > padded) {
    raise(ErrorCategory::config, std::string(what) + ": kernel " + std::to_string(kernel) +
                                     " exceeds padded extent " + std::to_string(padded));
  }
  int span = padded - kernel;
  if (span % stride != 0) {
    raise(ErrorCategory::config,
          std::string(what) + ": extent " + std::to_string(in) + " with kernel " +
              std::to_string(kernel) + ", stride " + std::to_string(stride) +
              ", padding " + std::to_string(padding) + " gives a non-integral output size");
  }
  return span / stride + 1;
}

// ---------------------------------------------------------------------------
// dense

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  require_ndim(input, 2, "dense", "input");
  require_ndim(weights, 2, "dense", "weights");
  require_ndim(bias, 1, "dense", "bias");
  int b = input.dim(0), in = input.dim(1);
  int wi = weights.dim(0), wo = weights.dim(1);
  if (in != wi) {
    raise(ErrorCategory::dimension, "dense: input feature axis " + std::to_string(in) +
                                        " does not match weight rows " + std::to_string(wi));
  }
  if (bias.dim(0) != wo) {
    raise(ErrorCategory::dimension, "dense: bias length " + std::to_string(bias.dim(0)) +
                                        " does not match weight columns " + std::to_string(wo));
  }

  auto out = make_node({b, wo});
  MapCM X(input.values().data(), b, in);
  MapCM W(weights.values().data(), in, wo);
  MapM Y(out->value.data(), b, wo);
  Y.noalias() = X * W;
  const auto& bv = bias.values();
  for (int r = 0; r < b; ++r)
    for (int c = 0; c < wo; ++c) out->value[static_cast<std::size_t>(r) * wo + c] += bv[c];

  out->requires_grad =
      input.requires_grad() || weights.requires_grad() || bias.requires_grad();
  if (out->requires_grad) {
    out->parents = {input.node_ptr(), weights.node_ptr(), bias.node_ptr()};
    out->backprop = [b, in, wo](detail::Node& self) {
      auto& px = *self.parents[0];
      auto& pw = *self.parents[1];
      auto& pb = *self.parents[2];
      MapCM G(self.grad.data(), b, wo);
      if (px.requires_grad) {
        px.ensure_grad();
        MapM GX(px.grad.data(), b, in);
        MapCM W(pw.value.data(), in, wo);
        GX.noalias() += G * W.transpose();
      }
      if (pw.requires_grad) {
        pw.ensure_grad();
        MapM GW(pw.grad.data(), in, wo);
        MapCM X(px.value.data(), b, in);
        GW.noalias() += X.transpose() * G;
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (int r = 0; r < b; ++r)
          for (int c = 0; c < wo; ++c)
            pb.grad[static_cast<std::size_t>(c)] += self.grad[static_cast<std::size_t>(r) * wo + c];
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// conv2d: batch-wide im2col, one GEMM against the kernel matrix, then a
// layout fixup from [B*OH*OW, F] to [B, F, OH, OW].

namespace {

// Gathers padded windows; column layout is [C, kH, kW] flattened per row.
void im2col(const double* x, int c, int h, int w, int kernel, int stride, int padding,
            int oh, int ow, double* cols) {
  const int ckk = c * kernel * kernel;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* row = cols + (static_cast<std::size_t>(oy) * ow + ox) * ckk;
      int iy0 = oy * stride - padding;
      int ix0 = ox * stride - padding;
      std::size_t k = 0;
      for (int ci = 0; ci < c; ++ci) {
        const double* plane = x + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < kernel; ++ky) {
          int iy = iy0 + ky;
          for (int kx = 0; kx < kernel; ++kx, ++k) {
            int ix = ix0 + kx;
            row[k] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                         ? plane[static_cast<std::size_t>(iy) * w + ix]
                         : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, int c, int h, int w, int kernel, int stride,
                int padding, int oh, int ow, double* gx) {
  const int ckk = c * kernel * kernel;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const double* row = cols + (static_cast<std::size_t>(oy) * ow + ox) * ckk;
      int iy0 = oy * stride - padding;
      int ix0 = ox * stride - padding;
      std::size_t k = 0;
      for (int ci = 0; ci < c; ++ci) {
        double* plane = gx + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < kernel; ++ky) {
          int iy = iy0 + ky;
          for (int kx = 0; kx < kernel; ++kx, ++k) {
            int ix = ix0 + kx;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
              plane[static_cast<std::size_t>(iy) * w + ix] += row[k];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      int stride, int padding) {
  require_ndim(input, 4, "conv2d", "input");
  require_ndim(kernels, 2, "conv2d", "kernel matrix");
  require_ndim(bias, 1, "conv2d", "bias");
  const int b = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int f = kernels.dim(0);
  const int ckk = kernels.dim(1);
  if (ckk % c != 0) {
    raise(ErrorCategory::dimension,
          "conv2d: kernel matrix columns " + std::to_string(ckk) +
              " not divisible by input channels " + std::to_string(c));
  }
  const int kk = ckk / c;
  const int kernel = static_cast<int>(std::lround(std::sqrt(static_cast<double>(kk))));
  if (kernel * kernel != kk) {
    raise(ErrorCategory::dimension,
          "conv2d: kernel matrix implies a non-square window of " + std::to_string(kk) +
              " taps");
  }
  if (bias.dim(0) != f) {
    raise(ErrorCategory::dimension, "conv2d: bias length " + std::to_string(bias.dim(0)) +
                                        " does not match filter count " + std::to_string(f));
  }
  const int oh = conv_out_extent(h, kernel, stride, padding, "conv2d height");
  const int ow = conv_out_extent(w, kernel, stride, padding, "conv2d width");

  const std::int64_t rows = static_cast<std::int64_t>(b) * oh * ow;
  auto cols = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(rows) * ckk);
  for (int bi = 0; bi < b; ++bi) {
    im2col(input.values().data() + static_cast<std::size_t>(bi) * c * h * w, c, h, w,
           kernel, stride, padding, oh, ow,
           cols->data() + static_cast<std::size_t>(bi) * oh * ow * ckk);
  }

  std::vector<double> prod(static_cast<std::size_t>(rows) * f);
  {
    MapCM Cols(cols->data(), rows, ckk);
    MapCM K(kernels.values().data(), f, ckk);
    MapM P(prod.data(), rows, f);
    P.noalias() = Cols * K.transpose();
  }

  auto out = make_node({b, f, oh, ow});
  const auto& bv = bias.values();
  const int spatial = oh * ow;
  for (int bi = 0; bi < b; ++bi) {
    const double* p = prod.data() + static_cast<std::size_t>(bi) * spatial * f;
    double* o = out->value.data() + static_cast<std::size_t>(bi) * f * spatial;
    for (int s = 0; s < spatial; ++s)
      for (int fi = 0; fi < f; ++fi)
        o[static_cast<std::size_t>(fi) * spatial + s] = p[static_cast<std::size_t>(s) * f + fi] + bv[fi];
  }

  out->requires_grad =
      input.requires_grad() || kernels.requires_grad() || bias.requires_grad();
  if (out->requires_grad) {
    out->parents = {input.node_ptr(), kernels.node_ptr(), bias.node_ptr()};
    out->backprop = [cols, b, c, h, w, f, ckk, kernel, stride, padding, oh,
                     ow](detail::Node& self) {
      auto& px = *self.parents[0];
      auto& pk = *self.parents[1];
      auto& pb = *self.parents[2];
      const int spatial = oh * ow;
      const std::int64_t rows = static_cast<std::int64_t>(b) * spatial;

      // [B,F,OH,OW] -> [B*OH*OW, F]
      std::vector<double> gmat(static_cast<std::size_t>(rows) * f);
      for (int bi = 0; bi < b; ++bi) {
        const double* g = self.grad.data() + static_cast<std::size_t>(bi) * f * spatial;
        double* gm = gmat.data() + static_cast<std::size_t>(bi) * spatial * f;
        for (int s = 0; s < spatial; ++s)
          for (int fi = 0; fi < f; ++fi)
            gm[static_cast<std::size_t>(s) * f + fi] = g[static_cast<std::size_t>(fi) * spatial + s];
      }
      MapCM G(gmat.data(), rows, f);

      if (pk.requires_grad) {
        pk.ensure_grad();
        MapCM Cols(cols->data(), rows, ckk);
        MapM GK(pk.grad.data(), f, ckk);
        GK.noalias() += G.transpose() * Cols;
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r)
          for (int fi = 0; fi < f; ++fi)
            pb.grad[static_cast<std::size_t>(fi)] += gmat[static_cast<std::size_t>(r) * f + fi];
      }
      if (px.requires_grad) {
        px.ensure_grad();
        std::vector<double> gcols(static_cast<std::size_t>(rows) * ckk);
        {
          MapCM K(pk.value.data(), f, ckk);
          MapM GC(gcols.data(), rows, ckk);
          GC.noalias() = G * K;
        }
        for (int bi = 0; bi < b; ++bi) {
          col2im_add(gcols.data() + static_cast<std::size_t>(bi) * spatial * ckk, c, h, w,
                     kernel, stride, padding, oh, ow,
                     px.grad.data() + static_cast<std::size_t>(bi) * c * h * w);
        }
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// batchnorm

Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, Mode mode,
                         double epsilon, double momentum) {
  if (input.ndim() != 2 && input.ndim() != 4) {
    raise(ErrorCategory::dimension,
          "batchnorm: input must be [B,C] or [B,C,H,W], got " + shape_str(input.shape()));
  }
  const int b = input.dim(0);
  const int c = input.dim(1);
  const int spatial = input.ndim() == 4 ? input.dim(2) * input.dim(3) : 1;
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c) {
    raise(ErrorCategory::dimension,
          "batchnorm: parameter length does not match channel axis " + std::to_string(c));
  }

  auto out = make_node(input.shape());
  const auto& x = input.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  const std::int64_t n = static_cast<std::int64_t>(b) * spatial;

  if (mode == Mode::train) {
    if (b < 2) {
      raise(ErrorCategory::dimension,
            "batchnorm: train mode needs a batch of at least 2, got " + std::to_string(b));
    }
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
    for (int ci = 0; ci < c; ++ci) {
      double mean = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const double* p = x.data() + (static_cast<std::size_t>(bi) * c + ci) * spatial;
        for (int s = 0; s < spatial; ++s) mean += p[s];
      }
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const double* p = x.data() + (static_cast<std::size_t>(bi) * c + ci) * spatial;
        for (int s = 0; s < spatial; ++s) {
          double d = p[s] - mean;
          var += d * d;
        }
      }
      var /= static_cast<double>(n);
      double is = 1.0 / std::sqrt(var + epsilon);
      (*invstd)[static_cast<std::size_t>(ci)] = is;
      for (int bi = 0; bi < b; ++bi) {
        std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * spatial;
        for (int s = 0; s < spatial; ++s) {
          double xh = (x[off + s] - mean) * is;
          (*xhat)[off + s] = xh;
          out->value[off + s] = gv[static_cast<std::size_t>(ci)] * xh + bv[static_cast<std::size_t>(ci)];
        }
      }
      double unbiased = n > 1 ? var * static_cast<double>(n) / static_cast<double>(n - 1) : var;
      auto& rm = running_mean.values()[static_cast<std::size_t>(ci)];
      auto& rv = running_var.values()[static_cast<std::size_t>(ci)];
      rm = (1.0 - momentum) * rm + momentum * mean;
      rv = (1.0 - momentum) * rv + momentum * unbiased;
    }

    out->requires_grad =
        input.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    if (out->requires_grad) {
      out->parents = {input.node_ptr(), gamma.node_ptr(), beta.node_ptr()};
      out->backprop = [xhat, invstd, b, c, spatial, n](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        for (int ci = 0; ci < c; ++ci) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int bi = 0; bi < b; ++bi) {
            std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * spatial;
            for (int s = 0; s < spatial; ++s) {
              sum_g += self.grad[off + s];
              sum_gx += self.grad[off + s] * (*xhat)[off + s];
            }
          }
          if (pg.requires_grad) {
            pg.ensure_grad();
            pg.grad[static_cast<std::size_t>(ci)] += sum_gx;
          }
          if (pb.requires_grad) {
            pb.ensure_grad();
            pb.grad[static_cast<std::size_t>(ci)] += sum_g;
          }
          if (px.requires_grad) {
            px.ensure_grad();
            double g = pg.value[static_cast<std::size_t>(ci)];
            double is = (*invstd)[static_cast<std::size_t>(ci)];
            double inv_n = 1.0 / static_cast<double>(n);
            for (int bi = 0; bi < b; ++bi) {
              std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * spatial;
              for (int s = 0; s < spatial; ++s) {
                double go = self.grad[off + s];
                px.grad[off + s] += g * is * (go - inv_n * sum_g - (*xhat)[off + s] * inv_n * sum_gx);
              }
            }
          }
        }
      };
    }
    return Tensor::wrap(std::move(out));
  }

  // eval mode: running statistics are constants
  const auto& rm = running_mean.values();
  const auto& rv = running_var.values();
  auto scale = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
  for (int ci = 0; ci < c; ++ci)
    (*scale)[static_cast<std::size_t>(ci)] = 1.0 / std::sqrt(rv[static_cast<std::size_t>(ci)] + epsilon);
  for (int bi = 0; bi < b; ++bi) {
    for (int ci = 0; ci < c; ++ci) {
      std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * spatial;
      double is = (*scale)[static_cast<std::size_t>(ci)];
      for (int s = 0; s < spatial; ++s) {
        out->value[off + s] =
            gv[static_cast<std::size_t>(ci)] * (x[off + s] - rm[static_cast<std::size_t>(ci)]) * is +
            bv[static_cast<std::size_t>(ci)];
      }
    }
  }
  out->requires_grad =
      input.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  if (out->requires_grad) {
    auto xc = std::make_shared<std::vector<double>>(x.size());
    for (int bi = 0; bi < b; ++bi)
      for (int ci = 0; ci < c; ++ci) {
        std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * spatial;
        for (int s = 0; s < spatial; ++s)
          (*xc)[off + s] = (x[off + s] - rm[static_cast<std::size_t>(ci)]) * (*scale)[static_cast<std::size_t>(ci)];
      }
    out->parents = {input.node_ptr(), gamma.node_ptr(), beta.node_ptr()};
    out->backprop = [scale, xc, b, c, spatial](detail::Node& self) {
      auto& px = *self.parents[0];
      auto& pg = *self.parents[1];
      auto& pb = *self.parents[2];
      for (int ci = 0; ci < c; ++ci) {
        double k = pg.value[static_cast<std::size_t>(ci)] * (*scale)[static_cast<std::size_t>(ci)];
        for (int bi = 0; bi < b; ++bi) {
          std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * spatial;
          for (int s = 0; s < spatial; ++s) {
            double go = self.grad[off + s];
            if (px.requires_grad) {
              px.ensure_grad();
              px.grad[off + s] += go * k;
            }
            if (pg.requires_grad) {
              pg.ensure_grad();
              pg.grad[static_cast<std::size_t>(ci)] += go * (*xc)[off + s];
            }
            if (pb.requires_grad) {
              pb.ensure_grad();
              pb.grad[static_cast<std::size_t>(ci)] += go;
            }
          }
        }
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// pooling

Tensor maxpool_forward(const Tensor& input, int kernel, int stride) {
  require_ndim(input, 4, "maxpool", "input");
  const int b = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = conv_out_extent(h, kernel, stride, 0, "maxpool height");
  const int ow = conv_out_extent(w, kernel, stride, 0, "maxpool width");

  auto out = make_node({b, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(out->value.size());
  const auto& x = input.values();
  for (int bi = 0; bi < b; ++bi) {
    for (int ci = 0; ci < c; ++ci) {
      const double* plane = x.data() + (static_cast<std::size_t>(bi) * c + ci) * h * w;
      std::size_t obase = (static_cast<std::size_t>(bi) * c + ci) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          int iy0 = oy * stride, ix0 = ox * stride;
          double best = plane[static_cast<std::size_t>(iy0) * w + ix0];
          int best_idx = iy0 * w + ix0;
          for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
              int idx = (iy0 + ky) * w + (ix0 + kx);
              if (plane[static_cast<std::size_t>(idx)] > best) {
                best = plane[static_cast<std::size_t>(idx)];
                best_idx = idx;
              }
            }
          }
          std::size_t o = obase + static_cast<std::size_t>(oy) * ow + ox;
          out->value[o] = best;
          (*argmax)[o] = best_idx;
        }
      }
    }
  }
  out->requires_grad = input.requires_grad();
  if (out->requires_grad) {
    out->parents = {input.node_ptr()};
    out->backprop = [argmax, b, c, h, w, oh, ow](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (int bi = 0; bi < b; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
          std::size_t pbase = (static_cast<std::size_t>(bi) * c + ci) * h * w;
          std::size_t obase = (static_cast<std::size_t>(bi) * c + ci) * oh * ow;
          for (int s = 0; s < oh * ow; ++s)
            p.grad[pbase + static_cast<std::size_t>((*argmax)[obase + s])] += self.grad[obase + s];
        }
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor avgpool_forward(const Tensor& input, int kernel, int stride) {
  require_ndim(input, 4, "avgpool", "input");
  const int b = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = conv_out_extent(h, kernel, stride, 0, "avgpool height");
  const int ow = conv_out_extent(w, kernel, stride, 0, "avgpool width");
  const double inv = 1.0 / (static_cast<double>(kernel) * kernel);

  auto out = make_node({b, c, oh, ow});
  const auto& x = input.values();
  for (int bi = 0; bi < b; ++bi) {
    for (int ci = 0; ci < c; ++ci) {
      const double* plane = x.data() + (static_cast<std::size_t>(bi) * c + ci) * h * w;
      std::size_t obase = (static_cast<std::size_t>(bi) * c + ci) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double s = 0.0;
          for (int ky = 0; ky < kernel; ++ky)
            for (int kx = 0; kx < kernel; ++kx)
              s += plane[static_cast<std::size_t>(oy * stride + ky) * w + (ox * stride + kx)];
          out->value[obase + static_cast<std::size_t>(oy) * ow + ox] = s * inv;
        }
      }
    }
  }
  out->requires_grad = input.requires_grad();
  if (out->requires_grad) {
    out->parents = {input.node_ptr()};
    out->backprop = [kernel, stride, b, c, h, w, oh, ow, inv](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (int bi = 0; bi < b; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
          std::size_t pbase = (static_cast<std::size_t>(bi) * c + ci) * h * w;
          std::size_t obase = (static_cast<std::size_t>(bi) * c + ci) * oh * ow;
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              double g = self.grad[obase + static_cast<std::size_t>(oy) * ow + ox] * inv;
              for (int ky = 0; ky < kernel; ++ky)
                for (int kx = 0; kx < kernel; ++kx)
                  p.grad[pbase + static_cast<std::size_t>(oy * stride + ky) * w + (ox * stride + kx)] += g;
            }
        }
      }
    };
  }
  return Tensor::wrap(std::move(out));
}

Tensor flatten_forward(const Tensor& input) {
  if (input.ndim() < 2) {
    raise(ErrorCategory::dimension,
          "flatten: input must have a batch axis, got " + shape_str(input.shape()));
  }
  int rest = 1;
  for (int i = 1; i < input.ndim(); ++i) rest *= input.dim(i);
  return reshape(input, {input.dim(0), rest});
}

// ---------------------------------------------------------------------------
// Layer

Layer::Layer(LayerSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  switch (spec_.kind) {
    case LayerKind::dense:
      weight_ = Tensor::zeros({spec_.units_in, spec_.units_out}, true);
      bias_ = Tensor::zeros({spec_.units_out}, true);
      break;
    case LayerKind::conv2d:
      weight_ = Tensor::zeros(
          {spec_.out_channels, spec_.in_channels * spec_.kernel * spec_.kernel}, true);
      bias_ = Tensor::zeros({spec_.out_channels}, true);
      break;
    case LayerKind::batchnorm:
      gamma_ = Tensor::full({spec_.channels}, 1.0, true);
      beta_ = Tensor::zeros({spec_.channels}, true);
      running_mean_ = Tensor::zeros({spec_.channels});
      running_var_ = Tensor::full({spec_.channels}, 1.0);
      break;
    default:
      break;
  }
}

void Layer::init_params(std::uint64_t seed) {
  Rng rng(seed);
  int fan_in = 0;
  switch (spec_.kind) {
    case LayerKind::dense:
      fan_in = spec_.units_in;
      break;
    case LayerKind::conv2d:
      fan_in = spec_.in_channels * spec_.kernel * spec_.kernel;
      break;
    default:
      return;
  }
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : weight_.values()) v = rng.uniform(-limit, limit);
  for (auto& v : bias_.values()) v = 0.0;
}

Tensor Layer::forward(const Tensor& x, Mode mode) {
  switch (spec_.kind) {
    case LayerKind::dense:
      return dense_forward(x, weight_, bias_);
    case LayerKind::conv2d:
      if (x.ndim() == 4 && x.dim(1) != spec_.in_channels) {
        raise(ErrorCategory::dimension,
              "conv2d: input has " + std::to_string(x.dim(1)) + " channels, layer expects " +
                  std::to_string(spec_.in_channels));
      }
      return conv2d_forward(x, weight_, bias_, spec_.stride, spec_.padding);
    case LayerKind::batchnorm:
      return batchnorm_forward(x, gamma_, beta_, running_mean_, running_var_, mode,
                               spec_.epsilon, spec_.momentum);
    case LayerKind::relu:
      return relu(x);
    case LayerKind::maxpool:
      return maxpool_forward(x, spec_.kernel, spec_.stride);
    case LayerKind::avgpool:
      return avgpool_forward(x, spec_.kernel, spec_.stride);
    case LayerKind::flatten:
      return flatten_forward(x);
  }
  raise(ErrorCategory::usage, "forward on unknown layer kind");
}

std::vector<Tensor> Layer::parameters() {
  switch (spec_.kind) {
    case LayerKind::dense:
    case LayerKind::conv2d:
      return {weight_, bias_};
    case LayerKind::batchnorm:
      return {gamma_, beta_};
    default:
      return {};
  }
}

std::vector<Tensor> Layer::state() {
  if (spec_.kind == LayerKind::batchnorm) return {running_mean_, running_var_};
  return {};
}

Layer Layer::clone() const {
  Layer out(spec_);
  auto copy = [](const Tensor& src, Tensor& dst) {
    if (src.defined()) dst.values() = src.values();
  };
  copy(weight_, out.weight_);
  copy(bias_, out.bias_);
  copy(gamma_, out.gamma_);
  copy(beta_, out.beta_);
  copy(running_mean_, out.running_mean_);
  copy(running_var_, out.running_var_);
  return out;
}

}  // namespace ltk
