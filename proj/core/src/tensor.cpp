// SPDX-License-Identifier: Apache-2.0
#include "ltk/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ltk {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;

std::shared_ptr<detail::Node> make_node(std::vector<int> shape) {
  auto n = std::make_shared<detail::Node>();
  std::int64_t count = shape_numel(shape);
  n->shape = std::move(shape);
  n->value.assign(static_cast<std::size_t>(count), 0.0);
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    raise(ErrorCategory::dimension,
          std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()) + " differ");
  }
}

void accumulate(detail::Node& dst, const std::vector<double>& g) {
  dst.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

}  // namespace

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) raise(ErrorCategory::dimension, "non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

#ifndef NDEBUG
void debug_check_finite(const detail::Node& n, const char* op) {
  for (double v : n.value) {
    if (!std::isfinite(v)) {
      raise(ErrorCategory::training, std::string("non-finite value produced by ") + op);
    }
  }
}
#define LTK_CHECK_FINITE(node, op) debug_check_finite(node, op)
#else
#define LTK_CHECK_FINITE(node, op) ((void)0)
#endif

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto n = make_node(std::move(shape));
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
  auto n = make_node(std::move(shape));
  std::fill(n->value.begin(), n->value.end(), v);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  std::int64_t count = shape_numel(shape);
  if (count != static_cast<std::int64_t>(values.size())) {
    raise(ErrorCategory::dimension,
          "value count " + std::to_string(values.size()) + " does not match shape " +
              shape_str(shape));
  }
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_values({1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) {
    raise(ErrorCategory::usage, "item() on non-scalar tensor " + shape_str(shape()));
  }
  return values()[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) raise(ErrorCategory::usage, "grad() before backward()");
  return node()->grad;
}

std::vector<double>& Tensor::grad_mut() {
  node()->ensure_grad();
  return node()->grad;
}

void Tensor::zero_grad() { node()->grad.clear(); }

void Tensor::backward() const {
  if (numel() != 1) {
    raise(ErrorCategory::usage,
          "backward() requires a scalar loss, got " + shape_str(shape()));
  }
  auto* root = node();
  if (!root->requires_grad) return;

  // Post-order DFS; reversing it yields a valid reverse-topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next].get();
      ++next;
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise ops

namespace {

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 double (*fwd)(double, double),
                 void (*bwd)(const detail::Node& out, detail::Node& pa, detail::Node& pb)) {
  check_same_shape(a, b, name);
  auto out = make_node(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = fwd(av[i], bv[i]);
  out->requires_grad = a.requires_grad() || b.requires_grad();
  if (out->requires_grad) {
    out->parents = {a.node_ptr(), b.node_ptr()};
    out->backprop = [bwd](detail::Node& self) {
      bwd(self, *self.parents[0], *self.parents[1]);
    };
  }
  LTK_CHECK_FINITE(*out, name);
  return Tensor::wrap(std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](const detail::Node& out, detail::Node& pa, detail::Node& pb) {
        if (pa.requires_grad) accumulate(pa, out.grad);
        if (pb.requires_grad) accumulate(pb, out.grad);
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](const detail::Node& out, detail::Node& pa, detail::Node& pb) {
        if (pa.requires_grad) accumulate(pa, out.grad);
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i) pb.grad[i] -= out.grad[i];
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](const detail::Node& out, detail::Node& pa, detail::Node& pb) {
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i)
            pa.grad[i] += out.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i)
            pb.grad[i] += out.grad[i] * pa.value[i];
        }
      });
}

Tensor scale(const Tensor& a, double c) {
  auto out = make_node(a.shape());
  const auto& av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * c;
  out->requires_grad = a.requires_grad();
  if (out->requires_grad) {
    out->parents = {a.node_ptr()};
    out->backprop = [c](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * c;
    };
  }
  LTK_CHECK_FINITE(*out, "scale");
  return Tensor::wrap(std::move(out));
}

Tensor add_scaled(const Tensor& a, const Tensor& b, double c) {
  check_same_shape(a, b, "add_scaled");
  auto out = make_node(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + c * bv[i];
  out->requires_grad = a.requires_grad() || b.requires_grad();
  if (out->requires_grad) {
    out->parents = {a.node_ptr(), b.node_ptr()};
    out->backprop = [c](detail::Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.requires_grad) accumulate(pa, self.grad);
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * c;
      }
    };
  }
  LTK_CHECK_FINITE(*out, "add_scaled");
  return Tensor::wrap(std::move(out));
}

Tensor relu(const Tensor& x) {
  auto out = make_node(x.shape());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  out->requires_grad = x.requires_grad();
  if (out->requires_grad) {
    out->parents = {x.node_ptr()};
    // Subgradient at exactly 0 is taken as 0.
    out->backprop = [](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
    };
  }
  return Tensor::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// matrix products

namespace {

void check_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    raise(ErrorCategory::dimension,
          std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    raise(ErrorCategory::dimension,
          "matmul: inner axes differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  auto out = make_node({m, n});
  MapCM A(a.values().data(), m, k);
  MapCM B(b.values().data(), k, n);
  MapM C(out->value.data(), m, n);
  C.noalias() = A * B;
  out->requires_grad = a.requires_grad() || b.requires_grad();
  if (out->requires_grad) {
    out->parents = {a.node_ptr(), b.node_ptr()};
    out->backprop = [m, k, n](detail::Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      MapCM G(self.grad.data(), m, n);
      if (pa.requires_grad) {
        pa.ensure_grad();
        MapM GA(pa.grad.data(), m, k);
        MapCM B(pb.value.data(), k, n);
        GA.noalias() += G * B.transpose();
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        MapM GB(pb.grad.data(), k, n);
        MapCM A(pa.value.data(), m, k);
        GB.noalias() += A.transpose() * G;
      }
    };
  }
  LTK_CHECK_FINITE(*out, "matmul");
  return Tensor::wrap(std::move(out));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  int m = a.dim(0), k = a.dim(1), n = b.dim(0), k2 = b.dim(1);
  if (k != k2) {
    raise(ErrorCategory::dimension,
          "matmul_nt: inner axes differ, " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()) + "^T");
  }
  auto out = make_node({m, n});
  MapCM A(a.values().data(), m, k);
  MapCM B(b.values().data(), n, k);
  MapM C(out->value.data(), m, n);
  C.noalias() = A * B.transpose();
  out->requires_grad = a.requires_grad() || b.requires_grad();
  if (out->requires_grad) {
    out->parents = {a.node_ptr(), b.node_ptr()};
    out->backprop = [m, k, n](detail::Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      MapCM G(self.grad.data(), m, n);
      if (pa.requires_grad) {
        pa.ensure_grad();
        MapM GA(pa.grad.data(), m, k);
        MapCM B(pb.value.data(), n, k);
        GA.noalias() += G * B;
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        MapM GB(pb.grad.data(), n, k);
        MapCM A(pa.value.data(), m, k);
        GB.noalias() += G.transpose() * A;
      }
    };
  }
  LTK_CHECK_FINITE(*out, "matmul_nt");
  return Tensor::wrap(std::move(out));
}

// ---------------------------------------------------------------------------
// reductions / views

Tensor sum(const Tensor& a) {
  auto out = make_node({1});
  double s = 0.0;
  for (double v : a.values()) s += v;
  out->value[0] = s;
  out->requires_grad = a.requires_grad();
  if (out->requires_grad) {
    out->parents = {a.node_ptr()};
    out->backprop = [](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      double g = self.grad[0];
      for (auto& gi : p.grad) gi += g;
    };
  }
  LTK_CHECK_FINITE(*out, "sum");
  return Tensor::wrap(std::move(out));
}

Tensor reshape(const Tensor& a, std::vector<int> new_shape) {
  if (shape_numel(new_shape) != a.numel()) {
    raise(ErrorCategory::dimension,
          "reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape) +
              " changes element count");
  }
  auto out = std::make_shared<detail::Node>();
  out->shape = std::move(new_shape);
  out->value = a.values();
  out->requires_grad = a.requires_grad();
  if (out->requires_grad) {
    out->parents = {a.node_ptr()};
    out->backprop = [](detail::Node& self) { accumulate(*self.parents[0], self.grad); };
  }
  return Tensor::wrap(std::move(out));
}

Tensor detach(const Tensor& a) {
  auto out = std::make_shared<detail::Node>();
  out->shape = a.shape();
  out->value = a.values();
  out->requires_grad = false;
  return Tensor::wrap(std::move(out));
}

Tensor channel_sumsq(const Tensor& fmap) {
  if (fmap.ndim() != 4) {
    raise(ErrorCategory::dimension,
          "channel_sumsq: expected [B,C,H,W], got " + shape_str(fmap.shape()));
  }
  int b = fmap.dim(0), c = fmap.dim(1), s = fmap.dim(2) * fmap.dim(3);
  auto out = make_node({b, s});
  const auto& x = fmap.values();
  for (int bi = 0; bi < b; ++bi) {
    for (int ci = 0; ci < c; ++ci) {
      const double* px = x.data() + (static_cast<std::size_t>(bi) * c + ci) * s;
      double* po = out->value.data() + static_cast<std::size_t>(bi) * s;
      for (int si = 0; si < s; ++si) po[si] += px[si] * px[si];
    }
  }
  out->requires_grad = fmap.requires_grad();
  if (out->requires_grad) {
    out->parents = {fmap.node_ptr()};
    out->backprop = [b, c, s](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (int bi = 0; bi < b; ++bi) {
        const double* g = self.grad.data() + static_cast<std::size_t>(bi) * s;
        for (int ci = 0; ci < c; ++ci) {
          std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * s;
          for (int si = 0; si < s; ++si)
            p.grad[off + si] += 2.0 * p.value[off + si] * g[si];
        }
      }
    };
  }
  LTK_CHECK_FINITE(*out, "channel_sumsq");
  return Tensor::wrap(std::move(out));
}

Tensor row_l2_normalize(const Tensor& a, bool* zero_row_hit) {
  check_2d(a, "row_l2_normalize");
  int b = a.dim(0), n = a.dim(1);
  auto out = make_node({b, n});
  std::vector<double> norms(static_cast<std::size_t>(b), 0.0);
  const auto& x = a.values();
  for (int bi = 0; bi < b; ++bi) {
    const double* px = x.data() + static_cast<std::size_t>(bi) * n;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += px[i] * px[i];
    norms[static_cast<std::size_t>(bi)] = std::sqrt(s);
  }
  constexpr double kZeroGuard = 1e-12;
  for (int bi = 0; bi < b; ++bi) {
    double nv = norms[static_cast<std::size_t>(bi)];
    double* po = out->value.data() + static_cast<std::size_t>(bi) * n;
    const double* px = x.data() + static_cast<std::size_t>(bi) * n;
    if (nv < kZeroGuard) {
      if (zero_row_hit) *zero_row_hit = true;
      continue;  // row stays zero
    }
    for (int i = 0; i < n; ++i) po[i] = px[i] / nv;
  }
  out->requires_grad = a.requires_grad();
  if (out->requires_grad) {
    out->parents = {a.node_ptr()};
    out->backprop = [b, n, norms](detail::Node& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (int bi = 0; bi < b; ++bi) {
        double nv = norms[static_cast<std::size_t>(bi)];
        if (nv < kZeroGuard) continue;
        const double* g = self.grad.data() + static_cast<std::size_t>(bi) * n;
        const double* x = p.value.data() + static_cast<std::size_t>(bi) * n;
        double* gx = p.grad.data() + static_cast<std::size_t>(bi) * n;
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += x[i] * g[i];
        double inv = 1.0 / nv;
        double inv3 = inv * inv * inv;
        for (int i = 0; i < n; ++i) gx[i] += g[i] * inv - x[i] * dot * inv3;
      }
    };
  }
  LTK_CHECK_FINITE(*out, "row_l2_normalize");
  return Tensor::wrap(std::move(out));
}

}  // namespace ltk
