// SPDX-License-Identifier: Apache-2.0
#include "ltk/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace ltk {

namespace {

// Logits for a sample list, eval mode, batched to bound graph-free memory.
std::vector<std::vector<double>> batched_logits(SplitModel& model,
                                                const std::vector<SceneSample>& samples,
                                                int max_batch) {
  if (samples.empty()) raise(ErrorCategory::usage, "cannot evaluate an empty sample set");
  if (max_batch < 1) raise(ErrorCategory::usage, "evaluation batch size must be positive");
  const auto& cfg = model.config();
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size();
       start += static_cast<std::size_t>(max_batch)) {
    std::size_t stop = std::min(samples.size(), start + static_cast<std::size_t>(max_batch));
    std::vector<SceneSample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                   samples.begin() + static_cast<std::ptrdiff_t>(stop));
    Tensor logits = model.forward(stack_features(chunk, cfg.height, cfg.width), Mode::eval);
    std::size_t classes = static_cast<std::size_t>(logits.dim(1));
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      std::vector<double> row(classes);
      for (std::size_t c = 0; c < classes; ++c) row[c] = logits[r * classes + c];
      out.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace

double evaluate_accuracy(SplitModel& model, const std::vector<SceneSample>& samples,
                         int max_batch) {
  auto logits = batched_logits(model, samples, max_batch);
  int hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& row = logits[i];
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    if (static_cast<int>(best) == samples[i].label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

Tensor intra_class_discrepancy(SplitModel& model, const std::vector<SceneSample>& samples,
                               int max_batch) {
  if (samples.empty()) raise(ErrorCategory::usage, "cannot evaluate an empty sample set");
  for (const auto& s : samples)
    if (s.label != samples[0].label)
      raise(ErrorCategory::validation, "discrepancy samples must share one class");
  auto logits = batched_logits(model, samples, max_batch);
  int n = static_cast<int>(samples.size());
  Tensor d = Tensor::zeros({n, n});
  auto& v = d.values();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t c = 0; c < logits[0].size(); ++c) {
        double diff = logits[static_cast<std::size_t>(i)][c] - logits[static_cast<std::size_t>(j)][c];
        sum += diff * diff;
      }
      double dist = std::sqrt(sum);
      v[static_cast<std::size_t>(i * n + j)] = dist;
      v[static_cast<std::size_t>(j * n + i)] = dist;
    }
  }
  return d;
}

double mean_off_diagonal(const Tensor& matrix) {
  if (matrix.ndim() != 2 || matrix.dim(0) != matrix.dim(1))
    raise(ErrorCategory::dimension, "expected a square matrix");
  int n = matrix.dim(0);
  if (n < 2) raise(ErrorCategory::usage, "off-diagonal mean needs at least a 2x2 matrix");
  double sum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) sum += matrix[static_cast<std::size_t>(i * n + j)];
  return sum / static_cast<double>(n * (n - 1));
}

void export_heatmap(const Tensor& matrix, const std::string& path) {
  if (matrix.ndim() != 2 || matrix.dim(0) != matrix.dim(1))
    raise(ErrorCategory::validation, "heatmap export expects a square matrix");
  double max = 0.0;
  for (double v : matrix.values()) {
    if (v < 0.0) raise(ErrorCategory::validation, "heatmap export expects nonnegative cells");
    max = std::max(max, v);
  }
  int n = matrix.dim(0);
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorCategory::io, "cannot open '" + path + "' for writing");
  os << "P5\n" << n << " " << n << "\n255\n";
  for (double v : matrix.values()) {
    double shade = max > 0.0 ? 255.0 * (1.0 - v / max) : 255.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(shade))));
  }
  if (!os) raise(ErrorCategory::io, "write to '" + path + "' failed");
}

void ResultTable::add(const std::string& method, const std::string& device, int trial,
                      double accuracy) {
  rows.push_back(ResultRow{method, device, trial, accuracy});
}

void ResultTable::sort_rows() {
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.device != b.device) return a.device < b.device;
    return a.trial < b.trial;
  });
}

std::vector<std::string> ResultTable::methods() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
  return out;
}

std::vector<std::string> ResultTable::devices() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.device) == out.end()) out.push_back(r.device);
  return out;
}

std::vector<double> ResultTable::cells(const std::string& method,
                                       const std::string& device) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.method == method && r.device == device) out.push_back(r.accuracy);
  return out;
}

double ResultTable::device_mean(const std::string& method, const std::string& device) const {
  auto c = cells(method, device);
  if (c.empty())
    raise(ErrorCategory::usage, "no result cells for " + method + " on device " + device);
  double sum = 0.0;
  for (double v : c) sum += v;
  return sum / static_cast<double>(c.size());
}

double ResultTable::device_std(const std::string& method, const std::string& device) const {
  auto c = cells(method, device);
  if (c.empty())
    raise(ErrorCategory::usage, "no result cells for " + method + " on device " + device);
  double mean = device_mean(method, device);
  double ss = 0.0;
  for (double v : c) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(c.size()));
}

double ResultTable::grand_mean(const std::string& method) const {
  double sum = 0.0;
  int count = 0;
  for (const auto& r : rows) {
    if (r.method == method) {
      sum += r.accuracy;
      ++count;
    }
  }
  if (count == 0) raise(ErrorCategory::usage, "no result cells for method " + method);
  return sum / static_cast<double>(count);
}

void ResultTable::save_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) raise(ErrorCategory::io, "cannot open '" + path + "' for writing");
  os << "method,device,trial,accuracy\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%s,%d,%.6f\n", r.method.c_str(), r.device.c_str(),
                  r.trial, r.accuracy);
    os << line;
  }
  if (!os) raise(ErrorCategory::io, "write to '" + path + "' failed");
}

ResultTable ResultTable::load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorCategory::io, "cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(is, line) || line != "method,device,trial,accuracy")
    raise(ErrorCategory::parse, "'" + path + "' is not a results table");
  ResultTable table;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream cells(line);
    ResultRow row;
    std::string trial, accuracy;
    if (!std::getline(cells, row.method, ',') || !std::getline(cells, row.device, ',') ||
        !std::getline(cells, trial, ',') || !std::getline(cells, accuracy))
      raise(ErrorCategory::parse,
            "results row at line " + std::to_string(line_no) + " is malformed");
    try {
      row.trial = std::stoi(trial);
      row.accuracy = std::stod(accuracy);
    } catch (const std::exception&) {
      raise(ErrorCategory::parse,
            "results row at line " + std::to_string(line_no) + " has non-numeric cells");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string ResultTable::to_markdown() const {
  auto ms = methods();
  auto ds = devices();
  std::ostringstream os;
  os << "| method |";
  for (const auto& d : ds) os << " " << d << " |";
  os << " mean |\n|---|";
  for (std::size_t i = 0; i < ds.size() + 1; ++i) os << "---|";
  os << "\n";
  char cell[64];
  for (const auto& m : ms) {
    os << "| " << m << " |";
    for (const auto& d : ds) {
      if (cells(m, d).empty()) {
        os << " - |";
        continue;
      }
      std::snprintf(cell, sizeof(cell), " %.2f ± %.2f |", device_mean(m, d), device_std(m, d));
      os << cell;
    }
    std::snprintf(cell, sizeof(cell), " %.2f |", grand_mean(m));
    os << cell << "\n";
  }
  return os.str();
}

}  // namespace ltk
