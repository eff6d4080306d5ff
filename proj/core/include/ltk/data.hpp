// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic paired-domain corpus: class-structured spectrogram-like patches
// captured by a clean reference device plus simulated recaptures through
// degraded device channels. Every target sample shares its underlying scene
// with exactly one source sample, so batches can carry aligned pairs.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ltk/batch.hpp"
#include "ltk/tensor.hpp"

namespace ltk {

struct DataConfig {
  int classes = 10;
  int per_class = 1000;            // source training scenes per class
  int source_test_per_class = 100;
  int per_device_targets = 750;    // target training samples per device
  int target_test_per_class = 25;  // per device
  int height = 40;                 // frequency bands
  int width = 64;                  // frames
  std::uint64_t seed = 1;
  std::vector<std::string> devices = {"B", "C", "s1", "s2", "s3", "s4", "s5", "s6"};
  // Global multiplier on channel degradation; calibrated once, then frozen.
  double device_severity = 2.5;

  void validate() const;
  static DataConfig small();  // CI preset: 3 classes, 200/class
};

struct SceneSample {
  std::vector<float> features;  // height*width, row-major, single channel
  int label = 0;
  std::int64_t sample_id = 0;
  std::string device;
};

struct DeviceProfile {
  std::string name;
  std::vector<double> band_gain;  // per frequency band, strictly positive
  double noise_std = 0.0;
  double gamma = 1.0;  // compression exponent applied after the gain
  std::uint64_t seed = 0;

  bool is_identity() const;
  void validate() const;
  static DeviceProfile identity(int bands);
  // Deterministic profile for a named device; rank >= 1 orders severity.
  static DeviceProfile builtin(const std::string& name, int bands, int rank,
                               double severity, std::uint64_t seed);
};

struct SplitSamples {
  std::vector<SceneSample> train;
  std::vector<SceneSample> test;
};

struct PairedDataset {
  DataConfig cfg;
  SplitSamples source;                         // reference device "A"
  std::map<std::string, SplitSamples> targets;  // keyed by device name

  const SplitSamples& target(const std::string& device) const;
};

// Reference-device scenes: per-class band templates with per-sample temporal
// modulation. Pure function of (arguments, seed); ids start at first_id.
std::vector<SceneSample> generate_scene_dataset(int classes, int n_per_class,
                                                int height, int width,
                                                std::uint64_t seed,
                                                std::int64_t first_id = 0);

// features' = clip01((band_gain * x)^gamma + noise); label and id survive.
SceneSample apply_device(const SceneSample& sample, const DeviceProfile& profile,
                         int height, int width);

struct ScaleMap {
  double lo = 0.0;
  double hi = 1.0;
  double apply(double v) const { return (v - lo) / (hi - lo); }
  double invert(double v) const { return lo + v * (hi - lo); }
};

// Min-max constants from the source training split only.
ScaleMap fit_scale(const std::vector<SceneSample>& source_train);
// Applies the map to every sample in place, then clips to [0,1].
void scale_features(PairedDataset& ds, const ScaleMap& map);

// Generation, device simulation, and scaling end to end.
PairedDataset build_dataset(const DataConfig& cfg);

// Label one-hot rows.
Tensor one_hot(const std::vector<int>& labels, int classes);
// [N,1,H,W] tensor from a sample list (f32 storage widened to f64).
Tensor stack_features(const std::vector<SceneSample>& samples, int height, int width);
std::vector<int> labels_of(const std::vector<SceneSample>& samples);

// Aligned batches for one device's training split, shuffled by epoch_seed.
// A trailing remainder of one sample folds into the previous batch so every
// batch can feed train-mode batchnorm.
std::vector<PairedBatch> pair_batches(const PairedDataset& ds, const std::string& device,
                                      int batch_size, std::uint64_t epoch_seed);

// Versioned binary corpus (magic "LTKD", f32 features) and the textual
// pairing manifest (source_id<TAB>target_id<TAB>device per line).
void save_dataset(const PairedDataset& ds, const std::string& path);
PairedDataset load_dataset(const std::string& path);
void save_pairs(const PairedDataset& ds, const std::string& path);

}  // namespace ltk
