// SPDX-License-Identifier: Apache-2.0
#pragma once

// Evaluation metrics, result tables, and grayscale matrix export.

#include <string>
#include <vector>

#include "ltk/data.hpp"
#include "ltk/model.hpp"

namespace ltk {

// Fraction of samples whose argmax logit matches the label; ties break toward
// the lowest class index. Runs the model in eval mode, batched.
double evaluate_accuracy(SplitModel& model, const std::vector<SceneSample>& samples,
                         int max_batch = 256);

// Pairwise L2 distances between logit vectors of same-class samples.
// Result is [N, N], symmetric with a zero diagonal.
Tensor intra_class_discrepancy(SplitModel& model, const std::vector<SceneSample>& samples,
                               int max_batch = 256);

// Mean of the off-diagonal cells of a square distance matrix.
double mean_off_diagonal(const Tensor& matrix);

// Square nonnegative matrix to a binary 8-bit portable graymap; cell values
// map linearly from [0, max] to pixels [255, 0], so larger means darker.
void export_heatmap(const Tensor& matrix, const std::string& path);

struct ResultRow {
  std::string method;
  std::string device;
  int trial = 0;
  double accuracy = 0.0;  // percent
};

// Accuracy cells for method x device x trial sweeps, with CSV persistence
// and a markdown rendering for human review.
struct ResultTable {
  std::vector<ResultRow> rows;

  void add(const std::string& method, const std::string& device, int trial, double accuracy);
  // Deterministic order: (method, device, trial).
  void sort_rows();

  std::vector<std::string> methods() const;
  std::vector<std::string> devices() const;
  std::vector<double> cells(const std::string& method, const std::string& device) const;
  double device_mean(const std::string& method, const std::string& device) const;
  double device_std(const std::string& method, const std::string& device) const;
  // Arithmetic mean over every (device, trial) cell of the method.
  double grand_mean(const std::string& method) const;

  void save_csv(const std::string& path) const;
  static ResultTable load_csv(const std::string& path);
  std::string to_markdown() const;
};

}  // namespace ltk
