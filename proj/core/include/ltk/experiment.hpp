// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment orchestration: config parsing, the method x device x trial
// sweep, latent-depth ablation, and the reproducibility manifest.

#include <cstdint>
#include <string>
#include <vector>

#include "ltk/data.hpp"
#include "ltk/eval.hpp"
#include "ltk/model.hpp"
#include "ltk/trainer.hpp"

namespace ltk {

struct ExperimentConfig {
  DataConfig data;
  ModelConfig model;       // geometry fields are overwritten from `data`
  TransferConfig transfer;
  TrainSchedule pretrain;  // source training schedule
  TrainSchedule schedule;  // transfer schedule
  MixupConfig mixup;

  std::vector<std::string> methods = {"none", "onehot", "tsl", "vbkt"};
  std::vector<std::string> devices;  // empty means every dataset device
  int trials = 4;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  // Devices the per-method discrepancy heatmaps are computed on.
  std::string heatmap_device;  // empty means the first swept device
  int heatmap_samples = 30;
  bool reuse_checkpoint = true;  // load out_dir/source.ltk1 when present

  void validate() const;
  // Devices actually swept (the explicit list, or all dataset devices).
  std::vector<std::string> swept_devices() const;
};

// Line-oriented `section.key = value` text. '#' starts a comment. Errors
// carry the line number and key.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Full config serialization in fixed key order. The output directory and
// checkpoint-reuse switch are excluded so reruns into a fresh directory hash
// identically.
std::string canonical_config_text(const ExperimentConfig& cfg);

// Seed for one (device, trial) cell; method-independent by design so every
// method sees the same data order and target initialization.
std::uint64_t trial_seed(const ExperimentConfig& cfg, const std::string& device, int trial);

// Loads out_dir/source.ltk1 when reuse is enabled and the file exists,
// otherwise pretrains from scratch and saves the checkpoint. Returns the
// frozen source; the source-test accuracy fraction lands in *test_accuracy.
SplitModel prepare_source(const ExperimentConfig& cfg, const PairedDataset& ds,
                          double* test_accuracy = nullptr);

struct ExperimentArtifacts {
  ResultTable results;
  double source_test_accuracy = 0.0;  // percent
  std::string results_csv;
  std::string manifest_path;
};

// Pretrains the source model (or reloads a cached checkpoint), then runs
// every method x device x trial cell, writing results.csv, results.md,
// per-run training logs, per-method heatmaps, and manifest.json to out_dir.
ExperimentArtifacts run_experiment(const ExperimentConfig& cfg);

// Re-executes the experiment recorded in a manifest into a new directory.
ExperimentArtifacts rerun_from_manifest(const std::string& manifest_path,
                                        const std::string& out_dir);

struct DepthResult {
  int depth = 0;
  ResultTable results;
};

// Runs the sweep once per latent depth (1-based conv block) and writes a
// combined ablation.csv under the base output directory.
std::vector<DepthResult> ablate_latent_depth(const ExperimentConfig& base,
                                             const std::vector<int>& depths);

}  // namespace ltk
