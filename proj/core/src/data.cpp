// SPDX-License-Identifier: Apache-2.0
#include "ltk/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "byteio.hpp"
#include "ltk/rng.hpp"

namespace ltk {

namespace {

constexpr char kMagic[4] = {'L', 'T', 'K', 'D'};
constexpr std::uint32_t kVersion = 1;
constexpr char kSourceDevice[] = "A";

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Per-class band template: a few Gaussian bumps over the frequency axis,
// peak-normalized, with a small floor so no band is exactly silent.
struct BandBump {
  double center = 0.0;
  double width = 1.0;
  double amp = 1.0;
};

// Class identity is a set of band-energy bumps; every sample realizes its own
// perturbed copy, so classes overlap instead of separating on a fixed curve.
std::vector<BandBump> class_bumps(int cls, int height, std::uint64_t seed) {
  Rng rng(mix_seed(seed, seed_tag::class_template, static_cast<std::uint64_t>(cls)));
  std::vector<BandBump> bumps(3);
  for (auto& b : bumps) {
    b.center = rng.uniform(2.0, height - 3.0);
    b.width = rng.uniform(1.5, 4.0);
    b.amp = rng.uniform(0.6, 1.0);
  }
  return bumps;
}

std::vector<double> realize_template(const std::vector<BandBump>& bumps, int height, Rng& rng) {
  std::vector<double> t(static_cast<std::size_t>(height), 0.0);
  for (const auto& b : bumps) {
    double center = b.center + 1.6 * rng.normal();
    double width = b.width * std::exp(0.22 * rng.normal());
    double amp = b.amp * std::exp(0.30 * rng.normal());
    for (int h = 0; h < height; ++h) {
      double d = (h - center) / width;
      t[static_cast<std::size_t>(h)] += amp * std::exp(-0.5 * d * d);
    }
  }
  double peak = *std::max_element(t.begin(), t.end());
  for (auto& v : t) v = 0.05 + 0.95 * (v / peak);
  return t;
}

// Evenly spread `total` over `classes`, earlier classes absorbing remainders.
std::vector<int> per_class_counts(int total, int classes) {
  std::vector<int> counts(static_cast<std::size_t>(classes), total / classes);
  for (int k = 0; k < total % classes; ++k) counts[static_cast<std::size_t>(k)]++;
  return counts;
}

void write_section(std::ostream& os, const std::string& device, std::uint8_t split_tag,
                   const std::vector<SceneSample>& samples, int pixels) {
  byteio::write_string(os, device);
  os.put(static_cast<char>(split_tag));
  byteio::write_u64(os, samples.size());
  for (const auto& s : samples) {
    byteio::write_i64(os, s.sample_id);
    byteio::write_i32(os, s.label);
    if (static_cast<int>(s.features.size()) != pixels)
      raise(ErrorCategory::usage, "sample feature size does not match dataset shape");
    for (float v : s.features) byteio::write_f32(os, v);
  }
}

std::vector<SceneSample> read_section(std::istream& is, const std::string& expect_device,
                                      std::uint8_t expect_split, int classes, int pixels) {
  std::string device = byteio::read_string(is, "dataset file");
  if (device != expect_device)
    raise(ErrorCategory::parse, "dataset section device '" + device + "' out of order, expected '" +
                                    expect_device + "'");
  int split_tag = is.get();
  if (split_tag < 0) raise(ErrorCategory::parse, "dataset file truncated");
  if (split_tag != expect_split)
    raise(ErrorCategory::parse, "dataset section split tag out of order for device '" + device + "'");
  std::uint64_t count = byteio::read_u64(is, "dataset file");
  std::vector<SceneSample> samples;
  samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SceneSample s;
    s.sample_id = byteio::read_i64(is, "dataset file");
    s.label = byteio::read_i32(is, "dataset file");
    if (s.label < 0 || s.label >= classes)
      raise(ErrorCategory::parse, "dataset sample label out of range");
    s.device = device;
    s.features.resize(static_cast<std::size_t>(pixels));
    for (auto& v : s.features) v = byteio::read_f32(is, "dataset file");
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace

void DataConfig::validate() const {
  if (classes < 2) raise(ErrorCategory::config, "dataset needs at least 2 classes");
  if (per_class <= 0 || source_test_per_class <= 0)
    raise(ErrorCategory::config, "source sample counts must be positive");
  if (per_device_targets < classes)
    raise(ErrorCategory::config, "per-device target count must cover every class");
  if (per_device_targets > classes * per_class)
    raise(ErrorCategory::config, "per-device target count exceeds the source training pool");
  if (target_test_per_class <= 0 || target_test_per_class > source_test_per_class)
    raise(ErrorCategory::config,
          "target test count per class must be in [1, source_test_per_class]");
  if (height <= 0 || width <= 0) raise(ErrorCategory::config, "feature shape must be positive");
  if (devices.empty()) raise(ErrorCategory::config, "at least one target device is required");
  for (const auto& d : devices) {
    if (d.empty()) raise(ErrorCategory::config, "device names must be non-empty");
    if (d == kSourceDevice)
      raise(ErrorCategory::config, "device name 'A' is reserved for the source domain");
    if (std::count(devices.begin(), devices.end(), d) != 1)
      raise(ErrorCategory::config, "duplicate device name '" + d + "'");
  }
  if (device_severity <= 0.0) raise(ErrorCategory::config, "device severity must be positive");
}

DataConfig DataConfig::small() {
  DataConfig cfg;
  cfg.classes = 3;
  cfg.per_class = 200;
  cfg.source_test_per_class = 40;
  cfg.per_device_targets = 90;
  cfg.target_test_per_class = 10;
  return cfg;
}

bool DeviceProfile::is_identity() const {
  if (noise_std != 0.0 || gamma != 1.0) return false;
  return std::all_of(band_gain.begin(), band_gain.end(), [](double g) { return g == 1.0; });
}

void DeviceProfile::validate() const {
  if (band_gain.empty()) raise(ErrorCategory::config, "device profile has no band gains");
  for (double g : band_gain)
    if (!(g > 0.0)) raise(ErrorCategory::config, "band gains must be strictly positive");
  if (noise_std < 0.0) raise(ErrorCategory::config, "device noise level must be non-negative");
  if (!(gamma > 0.0)) raise(ErrorCategory::config, "device compression exponent must be positive");
}

DeviceProfile DeviceProfile::identity(int bands) {
  DeviceProfile p;
  p.name = kSourceDevice;
  p.band_gain.assign(static_cast<std::size_t>(bands), 1.0);
  return p;
}

DeviceProfile DeviceProfile::builtin(const std::string& name, int bands, int rank,
                                     double severity, std::uint64_t seed) {
  if (rank < 1) raise(ErrorCategory::config, "device rank must be at least 1");
  if (bands <= 0) raise(ErrorCategory::config, "device profile needs a positive band count");
  DeviceProfile p;
  p.name = name;
  p.seed = mix_seed(seed, seed_tag::device_profile, fnv1a64(name));
  Rng rng(p.seed);
  // Compressed rank ramp: the mildest device already distorts noticeably and
  // the harshest stays decodable instead of scaling linearly past usefulness.
  double s = severity * (0.65 + 0.40 * rank);
  double tilt = 0.35 * s * (rank % 2 == 0 ? 1.0 : -1.0);
  double ripple_amp = std::min(0.15 * s, 0.7);
  double ripple_freq = rng.uniform(1.5, 4.0);
  double ripple_phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  double base = std::max(1.0 - 0.05 * s, 0.3);
  p.band_gain.resize(static_cast<std::size_t>(bands));
  for (int h = 0; h < bands; ++h) {
    double pos = bands > 1 ? static_cast<double>(h) / (bands - 1) - 0.5 : 0.0;
    double g = base * (1.0 + tilt * pos) *
               (1.0 + ripple_amp * std::sin(2.0 * 3.14159265358979323846 * ripple_freq * h / bands +
                                            ripple_phase));
    p.band_gain[static_cast<std::size_t>(h)] = std::max(g, 0.05);
  }
  p.noise_std = 0.035 * s;
  p.gamma = 1.0 + 0.16 * s;
  p.validate();
  return p;
}

const SplitSamples& PairedDataset::target(const std::string& device) const {
  auto it = targets.find(device);
  if (it == targets.end())
    raise(ErrorCategory::data, "no target device named '" + device + "' in the dataset");
  return it->second;
}

std::vector<SceneSample> generate_scene_dataset(int classes, int n_per_class, int height,
                                                int width, std::uint64_t seed,
                                                std::int64_t first_id) {
  if (classes < 2) raise(ErrorCategory::config, "dataset needs at least 2 classes");
  if (n_per_class <= 0) raise(ErrorCategory::config, "sample counts must be positive");
  if (height <= 0 || width <= 0) raise(ErrorCategory::config, "feature shape must be positive");
  std::vector<std::vector<BandBump>> bumps;
  bumps.reserve(static_cast<std::size_t>(classes));
  for (int k = 0; k < classes; ++k) bumps.push_back(class_bumps(k, height, seed));

  std::vector<SceneSample> out;
  out.reserve(static_cast<std::size_t>(classes) * static_cast<std::size_t>(n_per_class));
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int k = 0; k < classes; ++k) {
    for (int i = 0; i < n_per_class; ++i) {
      SceneSample s;
      s.label = k;
      s.sample_id = first_id + static_cast<std::int64_t>(k) * n_per_class + i;
      s.device = kSourceDevice;
      // Draws depend only on (seed, sample_id): generation order is free.
      Rng rng(mix_seed(seed, seed_tag::scene_sample, static_cast<std::uint64_t>(s.sample_id)));
      std::vector<double> tmpl = realize_template(bumps[static_cast<std::size_t>(k)], height, rng);
      double amp = rng.uniform(0.7, 1.0);
      double rate = rng.uniform(0.5, 2.0);
      double phase = rng.uniform(0.0, two_pi);
      std::vector<double> env(static_cast<std::size_t>(width));
      for (int t = 0; t < width; ++t)
        env[static_cast<std::size_t>(t)] = 0.55 + 0.35 * std::sin(two_pi * rate * t / width + phase);
      s.features.resize(static_cast<std::size_t>(height) * static_cast<std::size_t>(width));
      for (int h = 0; h < height; ++h) {
        for (int t = 0; t < width; ++t) {
          double v = amp * tmpl[static_cast<std::size_t>(h)] * env[static_cast<std::size_t>(t)] +
                     0.05 * rng.normal();
          s.features[static_cast<std::size_t>(h * width + t)] = static_cast<float>(clamp01(v));
        }
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

SceneSample apply_device(const SceneSample& sample, const DeviceProfile& profile, int height,
                         int width) {
  profile.validate();
  if (static_cast<int>(profile.band_gain.size()) != height)
    raise(ErrorCategory::dimension, "device profile covers " +
                                        std::to_string(profile.band_gain.size()) +
                                        " bands, sample has " + std::to_string(height));
  if (static_cast<int>(sample.features.size()) != height * width)
    raise(ErrorCategory::dimension, "sample feature size does not match the stated shape");
  SceneSample out;
  out.label = sample.label;
  out.sample_id = sample.sample_id;
  out.device = profile.name;
  out.features.resize(sample.features.size());
  if (profile.is_identity()) {
    out.features = sample.features;
    return out;
  }
  Rng rng(mix_seed(profile.seed, seed_tag::device_noise,
                   static_cast<std::uint64_t>(sample.sample_id)));
  for (int h = 0; h < height; ++h) {
    double gain = profile.band_gain[static_cast<std::size_t>(h)];
    for (int t = 0; t < width; ++t) {
      std::size_t idx = static_cast<std::size_t>(h * width + t);
      double v = gain * static_cast<double>(sample.features[idx]);
      v = std::pow(v, profile.gamma);
      v += profile.noise_std * rng.normal();
      out.features[idx] = static_cast<float>(clamp01(v));
    }
  }
  return out;
}

ScaleMap fit_scale(const std::vector<SceneSample>& source_train) {
  if (source_train.empty())
    raise(ErrorCategory::config, "cannot fit feature scaling on an empty training split");
  double lo = source_train[0].features.empty() ? 0.0 : source_train[0].features[0];
  double hi = lo;
  for (const auto& s : source_train) {
    for (float v : s.features) {
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  }
  if (hi <= lo)
    raise(ErrorCategory::config, "feature scaling is degenerate: training split is constant");
  return ScaleMap{lo, hi};
}

void scale_features(PairedDataset& ds, const ScaleMap& map) {
  auto rescale = [&map](std::vector<SceneSample>& samples) {
    for (auto& s : samples)
      for (auto& v : s.features)
        v = static_cast<float>(clamp01(map.apply(static_cast<double>(v))));
  };
  rescale(ds.source.train);
  rescale(ds.source.test);
  for (auto& [name, split] : ds.targets) {
    (void)name;
    rescale(split.train);
    rescale(split.test);
  }
}

PairedDataset build_dataset(const DataConfig& cfg) {
  cfg.validate();
  PairedDataset ds;
  ds.cfg = cfg;
  ds.source.train = generate_scene_dataset(cfg.classes, cfg.per_class, cfg.height, cfg.width,
                                           cfg.seed, 0);
  std::int64_t test_base = static_cast<std::int64_t>(cfg.classes) * cfg.per_class;
  ds.source.test = generate_scene_dataset(cfg.classes, cfg.source_test_per_class, cfg.height,
                                          cfg.width, cfg.seed, test_base);

  // All devices recapture the same leading scenes of each class, so pairings
  // are the identity on sample ids.
  std::vector<int> train_counts = per_class_counts(cfg.per_device_targets, cfg.classes);
  int rank = 0;
  for (const auto& name : cfg.devices) {
    DeviceProfile profile =
        DeviceProfile::builtin(name, cfg.height, ++rank, cfg.device_severity, cfg.seed);
    SplitSamples split;
    for (int k = 0; k < cfg.classes; ++k) {
      for (int i = 0; i < train_counts[static_cast<std::size_t>(k)]; ++i) {
        const auto& src =
            ds.source.train[static_cast<std::size_t>(k) * cfg.per_class + static_cast<std::size_t>(i)];
        split.train.push_back(apply_device(src, profile, cfg.height, cfg.width));
      }
      for (int i = 0; i < cfg.target_test_per_class; ++i) {
        const auto& src = ds.source.test[static_cast<std::size_t>(k) * cfg.source_test_per_class +
                                         static_cast<std::size_t>(i)];
        split.test.push_back(apply_device(src, profile, cfg.height, cfg.width));
      }
    }
    ds.targets.emplace(name, std::move(split));
  }

  scale_features(ds, fit_scale(ds.source.train));
  return ds;
}

Tensor one_hot(const std::vector<int>& labels, int classes) {
  if (classes <= 0) raise(ErrorCategory::config, "class count must be positive");
  Tensor y = Tensor::zeros({static_cast<int>(labels.size()), classes});
  auto& v = y.values();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      raise(ErrorCategory::data, "label " + std::to_string(labels[i]) + " outside [0, " +
                                     std::to_string(classes) + ")");
    v[i * static_cast<std::size_t>(classes) + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return y;
}

Tensor stack_features(const std::vector<SceneSample>& samples, int height, int width) {
  if (samples.empty()) raise(ErrorCategory::data, "cannot stack an empty sample list");
  std::size_t pixels = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  Tensor x = Tensor::zeros({static_cast<int>(samples.size()), 1, height, width});
  auto& v = x.values();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != pixels)
      raise(ErrorCategory::dimension, "sample feature size does not match the stated shape");
    for (std::size_t p = 0; p < pixels; ++p)
      v[i * pixels + p] = static_cast<double>(samples[i].features[p]);
  }
  return x;
}

std::vector<int> labels_of(const std::vector<SceneSample>& samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  return labels;
}

std::vector<PairedBatch> pair_batches(const PairedDataset& ds, const std::string& device,
                                      int batch_size, std::uint64_t epoch_seed) {
  if (batch_size < 1) raise(ErrorCategory::usage, "batch size must be at least 1");
  const auto& split = ds.target(device);
  if (split.train.empty())
    raise(ErrorCategory::data, "target device '" + device + "' has no training samples");

  std::unordered_map<std::int64_t, std::size_t> source_index;
  source_index.reserve(ds.source.train.size());
  for (std::size_t i = 0; i < ds.source.train.size(); ++i)
    source_index.emplace(ds.source.train[i].sample_id, i);

  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(epoch_seed, seed_tag::epoch_shuffle));
  rng.shuffle(order);

  // Batch boundaries; a trailing singleton folds backward so train-mode
  // batchnorm always sees at least two rows.
  std::vector<std::size_t> bounds;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size))
    bounds.push_back(start);
  bounds.push_back(order.size());
  if (bounds.size() >= 3 && bounds[bounds.size() - 1] - bounds[bounds.size() - 2] == 1)
    bounds.erase(bounds.end() - 2);

  std::vector<PairedBatch> batches;
  for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
    std::vector<SceneSample> tgt;
    std::vector<SceneSample> src;
    for (std::size_t i = bounds[b]; i < bounds[b + 1]; ++i) {
      const auto& t = split.train[order[i]];
      auto it = source_index.find(t.sample_id);
      if (it == source_index.end())
        raise(ErrorCategory::data, "pairing: no source sample with id " +
                                       std::to_string(t.sample_id) + " for device '" + device + "'");
      const auto& s = ds.source.train[it->second];
      if (s.label != t.label)
        raise(ErrorCategory::data, "pairing: label mismatch on sample id " +
                                       std::to_string(t.sample_id));
      tgt.push_back(t);
      src.push_back(s);
    }
    PairedBatch batch;
    batch.x_target = stack_features(tgt, ds.cfg.height, ds.cfg.width);
    batch.y = one_hot(labels_of(tgt), ds.cfg.classes);
    batch.x_source = stack_features(src, ds.cfg.height, ds.cfg.width);
    batches.push_back(std::move(batch));
  }
  return batches;
}

void save_dataset(const PairedDataset& ds, const std::string& path) {
  ds.cfg.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorCategory::io, "cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  byteio::write_u32(os, kVersion);
  byteio::write_i32(os, ds.cfg.classes);
  byteio::write_i32(os, ds.cfg.per_class);
  byteio::write_i32(os, ds.cfg.source_test_per_class);
  byteio::write_i32(os, ds.cfg.per_device_targets);
  byteio::write_i32(os, ds.cfg.target_test_per_class);
  byteio::write_i32(os, ds.cfg.height);
  byteio::write_i32(os, ds.cfg.width);
  byteio::write_u64(os, ds.cfg.seed);
  byteio::write_f64(os, ds.cfg.device_severity);
  byteio::write_u32(os, static_cast<std::uint32_t>(ds.cfg.devices.size()));
  for (const auto& d : ds.cfg.devices) byteio::write_string(os, d);

  int pixels = ds.cfg.height * ds.cfg.width;
  write_section(os, kSourceDevice, 0, ds.source.train, pixels);
  write_section(os, kSourceDevice, 1, ds.source.test, pixels);
  for (const auto& d : ds.cfg.devices) {
    const auto& split = ds.target(d);
    write_section(os, d, 0, split.train, pixels);
    write_section(os, d, 1, split.test, pixels);
  }
  if (!os) raise(ErrorCategory::io, "write to '" + path + "' failed");
}

PairedDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorCategory::io, "cannot open '" + path + "' for reading");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    raise(ErrorCategory::parse, "'" + path + "' is not a dataset file");
  std::uint32_t version = byteio::read_u32(is, "dataset file");
  if (version != kVersion)
    raise(ErrorCategory::parse, "unsupported dataset version " + std::to_string(version));

  PairedDataset ds;
  ds.cfg.classes = byteio::read_i32(is, "dataset file");
  ds.cfg.per_class = byteio::read_i32(is, "dataset file");
  ds.cfg.source_test_per_class = byteio::read_i32(is, "dataset file");
  ds.cfg.per_device_targets = byteio::read_i32(is, "dataset file");
  ds.cfg.target_test_per_class = byteio::read_i32(is, "dataset file");
  ds.cfg.height = byteio::read_i32(is, "dataset file");
  ds.cfg.width = byteio::read_i32(is, "dataset file");
  ds.cfg.seed = byteio::read_u64(is, "dataset file");
  ds.cfg.device_severity = byteio::read_f64(is, "dataset file");
  std::uint32_t device_count = byteio::read_u32(is, "dataset file");
  ds.cfg.devices.clear();
  for (std::uint32_t i = 0; i < device_count; ++i)
    ds.cfg.devices.push_back(byteio::read_string(is, "dataset file"));
  ds.cfg.validate();

  int pixels = ds.cfg.height * ds.cfg.width;
  ds.source.train = read_section(is, kSourceDevice, 0, ds.cfg.classes, pixels);
  ds.source.test = read_section(is, kSourceDevice, 1, ds.cfg.classes, pixels);
  for (const auto& d : ds.cfg.devices) {
    SplitSamples split;
    split.train = read_section(is, d, 0, ds.cfg.classes, pixels);
    split.test = read_section(is, d, 1, ds.cfg.classes, pixels);
    ds.targets.emplace(d, std::move(split));
  }
  return ds;
}

void save_pairs(const PairedDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) raise(ErrorCategory::io, "cannot open '" + path + "' for writing");
  for (const auto& d : ds.cfg.devices) {
    for (const auto& t : ds.target(d).train)
      os << t.sample_id << '\t' << t.sample_id << '\t' << d << '\n';
  }
  if (!os) raise(ErrorCategory::io, "write to '" + path + "' failed");
}

}  // namespace ltk
