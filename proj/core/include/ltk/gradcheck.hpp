// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference verification of analytic gradients. Loss builders
// must be pure functions of the named parameters; batchnorm running-stat
// drift is tolerated because train-mode losses never read running stats.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ltk/latent.hpp"
#include "ltk/model.hpp"
#include "ltk/tensor.hpp"

namespace ltk {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;
  bool passed = false;

  double worst() const;
  std::string to_string() const;
};

// Compares backward() gradients of build_loss() against central differences
// (step h) for every element of every named parameter. corruption, when
// non-zero, is added to the first analytic gradient entry to prove the
// comparison can fail.
GradCheckReport check_gradients(std::vector<std::pair<std::string, Tensor>> params,
                                const std::function<Tensor()>& build_loss,
                                double tolerance, double h = 1e-5,
                                double corruption = 0.0);

// Cross-entropy loss of the model on a fixed micro-batch.
GradCheckReport grad_check_model(SplitModel& model, const Tensor& x, const Tensor& y,
                                 double tolerance);

// Same, but the forward pass samples through the latent site with a pinned
// noise draw; differentiability of the reparameterized path is what's tested.
GradCheckReport grad_check_latent(SplitModel& model, const Tensor& x, const Tensor& y,
                                  double sigma, const NoiseDraw& noise, double tolerance);

struct GradSuiteCase {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradSuiteResult {
  std::vector<GradSuiteCase> cases;
  double tolerance = 1e-4;
  double worst = 0.0;
  bool passed = false;

  std::string to_string() const;
};

// Randomized micro-cases cycling through model, latent-path, objective, and
// auxiliary-loss gradients; fully determined by (cases, seed).
GradSuiteResult run_gradcheck_suite(int cases, std::uint64_t seed, double tolerance = 1e-4);

}  // namespace ltk
