// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense f64 tensors with reverse-mode automatic differentiation. A Tensor is
// a shared handle to a graph node; ops record backward closures only while
// some input requires a gradient, so frozen subgraphs cost nothing.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ltk/error.hpp"

namespace ltk {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into each parent's grad.
  std::function<void(Node&)> backprop;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node()->shape; }
  int dim(int i) const { return node()->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(node()->shape.size()); }
  std::int64_t numel() const { return node()->numel(); }

  std::vector<double>& values() { return node()->value; }
  const std::vector<double>& values() const { return node()->value; }
  double operator[](std::int64_t i) const { return node()->value[static_cast<std::size_t>(i)]; }

  // Scalar convenience; usage error unless numel() == 1.
  double item() const;

  bool requires_grad() const { return node()->requires_grad; }
  void set_requires_grad(bool v) { node()->requires_grad = v; }

  bool has_grad() const { return !node()->grad.empty(); }
  const std::vector<double>& grad() const;
  std::vector<double>& grad_mut();
  void zero_grad();

  // Reverse accumulation from this scalar; usage error on non-scalars.
  void backward() const;

  std::shared_ptr<detail::Node> node_ptr() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  detail::Node* node() const {
    if (!node_) raise(ErrorCategory::usage, "operation on an undefined tensor");
    return node_.get();
  }
  std::shared_ptr<detail::Node> node_;
};

// Shape helpers.
std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Elementwise graph ops (same shape unless noted).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// a + c * b, used for the reparameterized draw z = mu + sigma * eps.
Tensor add_scaled(const Tensor& a, const Tensor& b, double c);
Tensor relu(const Tensor& x);

// 2-D matrix products.
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T

// Reductions and views.
Tensor sum(const Tensor& a);  // -> [1]
Tensor reshape(const Tensor& a, std::vector<int> new_shape);
Tensor detach(const Tensor& a);

// Per-example map of summed squared channels: [B,C,H,W] -> [B, H*W].
Tensor channel_sumsq(const Tensor& fmap);
// Row-wise x / ||x||_2 on [B,N]; all-zero rows pass through as zeros and the
// optional flag reports that a guard fired.
Tensor row_l2_normalize(const Tensor& a, bool* zero_row_hit = nullptr);

#ifndef NDEBUG
void debug_check_finite(const detail::Node& n, const char* op);
#endif

}  // namespace ltk
