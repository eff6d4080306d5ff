// SPDX-License-Identifier: Apache-2.0
#include "ltk/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ltk/rng.hpp"

namespace fs = std::filesystem;

namespace ltk {

namespace {

constexpr char kManifestFormat[] = "ltk-manifest-v1";

struct KV {
  std::string key;
  std::string value;
  int line = 0;
};

std::string trim(const std::string& s) {
  auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const KV& kv, const char* expected) {
  raise(ErrorCategory::parse, "line " + std::to_string(kv.line) + ": key '" + kv.key +
                                  "' expects " + expected + ", got '" + kv.value + "'");
}

int to_int(const KV& kv) {
  try {
    std::size_t used = 0;
    int v = std::stoi(kv.value, &used);
    if (used != kv.value.size()) bad_value(kv, "an integer");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    bad_value(kv, "an integer");
  }
}

std::uint64_t to_u64(const KV& kv) {
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(kv.value, &used);
    if (used != kv.value.size()) bad_value(kv, "an unsigned integer");
    return static_cast<std::uint64_t>(v);
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    bad_value(kv, "an unsigned integer");
  }
}

double to_double(const KV& kv) {
  try {
    std::size_t used = 0;
    double v = std::stod(kv.value, &used);
    if (used != kv.value.size()) bad_value(kv, "a number");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    bad_value(kv, "a number");
  }
}

bool to_bool(const KV& kv) {
  if (kv.value == "true" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "0") return false;
  bad_value(kv, "true or false");
}

std::vector<std::string> to_list(const KV& kv) {
  std::vector<std::string> out;
  std::istringstream is(kv.value);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) bad_value(kv, "a comma-separated list");
  return out;
}

std::vector<int> to_int_list(const KV& kv) {
  std::vector<int> out;
  for (const auto& item : to_list(kv)) {
    KV sub{kv.key, item, kv.line};
    out.push_back(to_int(sub));
  }
  return out;
}

void apply_schedule_key(TrainSchedule& s, const std::string& field, const KV& kv) {
  if (field == "max_lr") s.max_lr = to_double(kv);
  else if (field == "min_lr") s.min_lr = to_double(kv);
  else if (field == "cycle_length_epochs") s.cycle_length_epochs = to_int(kv);
  else if (field == "cycle_mult") s.cycle_mult = to_int(kv);
  else if (field == "total_epochs") s.total_epochs = to_int(kv);
  else if (field == "batch_size") s.batch_size = to_int(kv);
  else if (field == "momentum") s.momentum = to_double(kv);
  else if (field == "weight_decay") s.weight_decay = to_double(kv);
  else
    raise(ErrorCategory::parse,
          "line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
}

void apply_key(ExperimentConfig& cfg, const KV& kv) {
  auto dot = kv.key.find('.');
  if (dot == std::string::npos)
    raise(ErrorCategory::parse, "line " + std::to_string(kv.line) + ": key '" + kv.key +
                                    "' is not of the form section.key");
  std::string section = kv.key.substr(0, dot);
  std::string field = kv.key.substr(dot + 1);

  if (section == "data") {
    if (field == "classes") cfg.data.classes = to_int(kv);
    else if (field == "per_class") cfg.data.per_class = to_int(kv);
    else if (field == "source_test_per_class") cfg.data.source_test_per_class = to_int(kv);
    else if (field == "per_device_targets") cfg.data.per_device_targets = to_int(kv);
    else if (field == "target_test_per_class") cfg.data.target_test_per_class = to_int(kv);
    else if (field == "height") cfg.data.height = to_int(kv);
    else if (field == "width") cfg.data.width = to_int(kv);
    else if (field == "seed") cfg.data.seed = to_u64(kv);
    else if (field == "devices") cfg.data.devices = to_list(kv);
    else if (field == "device_severity") cfg.data.device_severity = to_double(kv);
    else
      raise(ErrorCategory::parse,
            "line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
  } else if (section == "model") {
    if (field == "channels") cfg.model.channels = to_int_list(kv);
    else if (field == "kernel") cfg.model.kernel = to_int(kv);
    else if (field == "latent_block") cfg.model.latent_block = to_int(kv);
    else if (field == "seed") cfg.model.seed = to_u64(kv);
    else
      raise(ErrorCategory::parse,
            "line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
  } else if (section == "transfer") {
    if (field == "method") cfg.transfer.method = parse_transfer_method(kv.value);
    else if (field == "sigma") cfg.transfer.sigma = to_double(kv);
    else if (field == "sample_sigma") cfg.transfer.sample_sigma = to_double(kv);
    else if (field == "temperature") cfg.transfer.temperature = to_double(kv);
    else if (field == "combine_with_tsl") cfg.transfer.combine_with_tsl = to_bool(kv);
    else if (field == "tsl_weight") cfg.transfer.tsl_weight = to_double(kv);
    else if (field == "ce_weight") cfg.transfer.ce_weight = to_double(kv);
    else if (field == "aux_weight") cfg.transfer.aux_weight = to_double(kv);
    else if (field == "init_from_source") cfg.transfer.init_from_source = to_bool(kv);
    else if (field == "teacher_on_target") cfg.transfer.teacher_on_target = to_bool(kv);
    else
      raise(ErrorCategory::parse,
            "line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
  } else if (section == "pretrain") {
    apply_schedule_key(cfg.pretrain, field, kv);
  } else if (section == "schedule") {
    apply_schedule_key(cfg.schedule, field, kv);
  } else if (section == "mixup") {
    if (field == "enabled") cfg.mixup.enabled = to_bool(kv);
    else if (field == "alpha") cfg.mixup.alpha = to_double(kv);
    else
      raise(ErrorCategory::parse,
            "line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
  } else if (section == "experiment") {
    if (field == "methods") cfg.methods = to_list(kv);
    else if (field == "devices") cfg.devices = to_list(kv);
    else if (field == "trials") cfg.trials = to_int(kv);
    else if (field == "seed") cfg.seed = to_u64(kv);
    else if (field == "out_dir") cfg.out_dir = kv.value;
    else if (field == "heatmap_device") cfg.heatmap_device = kv.value;
    else if (field == "heatmap_samples") cfg.heatmap_samples = to_int(kv);
    else if (field == "reuse_checkpoint") cfg.reuse_checkpoint = to_bool(kv);
    else
      raise(ErrorCategory::parse,
            "line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
  } else {
    raise(ErrorCategory::parse,
          "line " + std::to_string(kv.line) + ": unknown section '" + section + "'");
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

std::string join_ints(const std::vector<int>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(items[i]);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit_schedule(std::ostringstream& os, const char* section, const TrainSchedule& s) {
  os << section << ".max_lr = " << fmt_double(s.max_lr) << "\n";
  os << section << ".min_lr = " << fmt_double(s.min_lr) << "\n";
  os << section << ".cycle_length_epochs = " << s.cycle_length_epochs << "\n";
  os << section << ".cycle_mult = " << s.cycle_mult << "\n";
  os << section << ".total_epochs = " << s.total_epochs << "\n";
  os << section << ".batch_size = " << s.batch_size << "\n";
  os << section << ".momentum = " << fmt_double(s.momentum) << "\n";
  os << section << ".weight_decay = " << fmt_double(s.weight_decay) << "\n";
  os << section << ".grad_clip_norm = " << fmt_double(s.grad_clip_norm) << "\n";
}

// The model geometry always follows the dataset.
ModelConfig derived_model(const ExperimentConfig& cfg) {
  ModelConfig mc = cfg.model;
  mc.in_channels = 1;
  mc.height = cfg.data.height;
  mc.width = cfg.data.width;
  mc.classes = cfg.data.classes;
  return mc;
}

bool method_needs_source(TransferMethod m) {
  return m != TransferMethod::none && m != TransferMethod::onehot_finetune;
}

// Same-class slice of a device's test split for discrepancy heatmaps.
std::vector<SceneSample> heatmap_slice(const PairedDataset& ds, const std::string& device,
                                       int count) {
  std::vector<SceneSample> out;
  for (const auto& s : ds.target(device).test) {
    if (s.label == 0) out.push_back(s);
    if (static_cast<int>(out.size()) == count) break;
  }
  if (out.size() < 2)
    raise(ErrorCategory::data, "device '" + device + "' lacks same-class test samples for a heatmap");
  return out;
}

SplitModel init_target(const ExperimentConfig& cfg, TransferMethod method,
                       const SplitModel& source, const ModelConfig& mc, std::uint64_t tseed) {
  bool from_source = cfg.transfer.init_from_source && method != TransferMethod::none;
  if (from_source) {
    SplitModel target = source.clone();
    target.unfreeze();
    return target;
  }
  ModelConfig fresh = mc;
  fresh.seed = mix_seed(tseed, seed_tag::target_init);
  return SplitModel::build(fresh);
}

}  // namespace

void ExperimentConfig::validate() const {
  data.validate();
  derived_model(*this).validate();
  transfer.validate();
  pretrain.validate();
  schedule.validate();
  mixup.validate();
  if (trials < 1) raise(ErrorCategory::config, "experiment needs at least one trial");
  if (methods.empty()) raise(ErrorCategory::config, "experiment needs at least one method");
  for (const auto& m : methods) parse_transfer_method(m);
  for (const auto& d : devices)
    if (std::find(data.devices.begin(), data.devices.end(), d) == data.devices.end())
      raise(ErrorCategory::config, "experiment device '" + d + "' is not in the dataset");
  if (heatmap_samples < 2)
    raise(ErrorCategory::config, "heatmaps need at least two samples");
  if (!heatmap_device.empty()) {
    auto swept = swept_devices();
    if (std::find(swept.begin(), swept.end(), heatmap_device) == swept.end())
      raise(ErrorCategory::config,
            "heatmap device '" + heatmap_device + "' is not part of the sweep");
  }
}

std::vector<std::string> ExperimentConfig::swept_devices() const {
  return devices.empty() ? data.devices : devices;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  std::vector<std::string> seen;
  while (std::getline(is, raw)) {
    ++line_no;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    std::string line = trim(raw);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      raise(ErrorCategory::parse,
            "line " + std::to_string(line_no) + ": expected 'section.key = value'");
    KV kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (kv.key.empty() || kv.value.empty())
      raise(ErrorCategory::parse,
            "line " + std::to_string(line_no) + ": expected 'section.key = value'");
    if (std::find(seen.begin(), seen.end(), kv.key) != seen.end())
      raise(ErrorCategory::parse,
            "line " + std::to_string(line_no) + ": duplicate key '" + kv.key + "'");
    seen.push_back(kv.key);
    apply_key(cfg, kv);
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) raise(ErrorCategory::io, "cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_experiment_config(buffer.str());
}

std::string canonical_config_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "data.classes = " << cfg.data.classes << "\n";
  os << "data.per_class = " << cfg.data.per_class << "\n";
  os << "data.source_test_per_class = " << cfg.data.source_test_per_class << "\n";
  os << "data.per_device_targets = " << cfg.data.per_device_targets << "\n";
  os << "data.target_test_per_class = " << cfg.data.target_test_per_class << "\n";
  os << "data.height = " << cfg.data.height << "\n";
  os << "data.width = " << cfg.data.width << "\n";
  os << "data.seed = " << cfg.data.seed << "\n";
  os << "data.devices = " << join(cfg.data.devices) << "\n";
  os << "data.device_severity = " << fmt_double(cfg.data.device_severity) << "\n";
  os << "model.channels = " << join_ints(cfg.model.channels) << "\n";
  os << "model.kernel = " << cfg.model.kernel << "\n";
  os << "model.latent_block = " << cfg.model.latent_block << "\n";
  os << "model.seed = " << cfg.model.seed << "\n";
  os << "transfer.method = " << transfer_method_name(cfg.transfer.method) << "\n";
  os << "transfer.sigma = " << fmt_double(cfg.transfer.sigma) << "\n";
  os << "transfer.sample_sigma = " << fmt_double(cfg.transfer.sample_sigma) << "\n";
  os << "transfer.temperature = " << fmt_double(cfg.transfer.temperature) << "\n";
  os << "transfer.combine_with_tsl = " << (cfg.transfer.combine_with_tsl ? "true" : "false")
     << "\n";
  os << "transfer.tsl_weight = " << fmt_double(cfg.transfer.tsl_weight) << "\n";
  os << "transfer.ce_weight = " << fmt_double(cfg.transfer.ce_weight) << "\n";
  os << "transfer.aux_weight = " << fmt_double(cfg.transfer.aux_weight) << "\n";
  os << "transfer.init_from_source = " << (cfg.transfer.init_from_source ? "true" : "false")
     << "\n";
  os << "transfer.teacher_on_target = " << (cfg.transfer.teacher_on_target ? "true" : "false")
     << "\n";
  emit_schedule(os, "pretrain", cfg.pretrain);
  emit_schedule(os, "schedule", cfg.schedule);
  os << "mixup.enabled = " << (cfg.mixup.enabled ? "true" : "false") << "\n";
  os << "mixup.alpha = " << fmt_double(cfg.mixup.alpha) << "\n";
  os << "experiment.methods = " << join(cfg.methods) << "\n";
  if (!cfg.devices.empty()) os << "experiment.devices = " << join(cfg.devices) << "\n";
  os << "experiment.trials = " << cfg.trials << "\n";
  os << "experiment.seed = " << cfg.seed << "\n";
  if (!cfg.heatmap_device.empty())
    os << "experiment.heatmap_device = " << cfg.heatmap_device << "\n";
  os << "experiment.heatmap_samples = " << cfg.heatmap_samples << "\n";
  return os.str();
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, const std::string& device, int trial) {
  return mix_seed(cfg.seed, fnv1a64(device), static_cast<std::uint64_t>(trial));
}

SplitModel prepare_source(const ExperimentConfig& cfg, const PairedDataset& ds,
                          double* test_accuracy) {
  fs::create_directories(cfg.out_dir);
  std::string checkpoint = (fs::path(cfg.out_dir) / "source.ltk1").string();
  SplitModel source;
  double acc = 0.0;
  if (cfg.reuse_checkpoint && fs::exists(checkpoint)) {
    source = SplitModel::load(checkpoint);
    const ModelConfig want = derived_model(cfg);
    const ModelConfig& got = source.config();
    if (got.in_channels != want.in_channels || got.height != want.height ||
        got.width != want.width || got.classes != want.classes ||
        got.channels != want.channels || got.kernel != want.kernel)
      raise(ErrorCategory::config,
            "checkpoint '" + checkpoint + "' geometry does not match the experiment config");
    // The experiment config owns the latent placement; the checkpoint may
    // predate a different choice.
    source.set_latent_block(want.latent_block);
    source.freeze();
    acc = evaluate_accuracy(source, ds.source.test);
  } else {
    ModelConfig smc = derived_model(cfg);
    smc.seed = mix_seed(cfg.seed, fnv1a64("source-init"));
    source = SplitModel::build(smc);
    TrainSchedule ps = cfg.pretrain;
    ps.seed = mix_seed(cfg.seed, fnv1a64("pretrain"));
    acc = pretrain_source(source, ds, ps, cfg.mixup).test_accuracy;
    source.freeze();
    source.save(checkpoint);
  }
  if (test_accuracy) *test_accuracy = acc;
  return source;
}

ExperimentArtifacts run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(fs::path(cfg.out_dir) / "logs");
  PairedDataset ds = build_dataset(cfg.data);
  ModelConfig mc = derived_model(cfg);

  // One pretrained source serves every method, device, and trial.
  double source_acc = 0.0;
  SplitModel source = prepare_source(cfg, ds, &source_acc);

  auto swept = cfg.swept_devices();
  std::string heat_device = cfg.heatmap_device.empty() ? swept.front() : cfg.heatmap_device;

  ExperimentArtifacts artifacts;
  std::ofstream disc((fs::path(cfg.out_dir) / "discrepancy.csv").string());
  if (!disc) raise(ErrorCategory::io, "cannot open discrepancy.csv for writing");
  disc << "method,device,mean_off_diagonal\n";

  for (const auto& method_name : cfg.methods) {
    TransferMethod method = parse_transfer_method(method_name);
    std::string canonical_name = transfer_method_name(method);
    for (const auto& device : swept) {
      for (int trial = 0; trial < cfg.trials; ++trial) {
        std::uint64_t tseed = trial_seed(cfg, device, trial);
        TransferConfig tc = cfg.transfer;
        tc.method = method;
        TrainSchedule sch = cfg.schedule;
        sch.seed = tseed;
        SplitModel target = init_target(cfg, method, source, mc, tseed);
        bool needs_source = method_needs_source(method) || tc.combine_with_tsl;
        auto run = train_transfer(target, needs_source ? &source : nullptr, ds, device, tc,
                                  sch, cfg.mixup);
        std::string log_name =
            canonical_name + "-" + device + "-" + std::to_string(trial) + ".csv";
        write_history_csv(run.history, (fs::path(cfg.out_dir) / "logs" / log_name).string());
        double acc = 100.0 * evaluate_accuracy(target, ds.target(device).test);
        artifacts.results.add(canonical_name, device, trial, acc);

        if (trial == 0 && device == heat_device) {
          auto slice = heatmap_slice(ds, heat_device, cfg.heatmap_samples);
          Tensor d = intra_class_discrepancy(target, slice);
          std::string heat_name = "heatmap-" + canonical_name + "-" + heat_device + ".pgm";
          export_heatmap(d, (fs::path(cfg.out_dir) / heat_name).string());
          char row[160];
          std::snprintf(row, sizeof(row), "%s,%s,%.9g\n", canonical_name.c_str(),
                        heat_device.c_str(), mean_off_diagonal(d));
          disc << row;
        }
      }
    }
  }
  if (!disc) raise(ErrorCategory::io, "write to discrepancy.csv failed");
  disc.close();

  artifacts.results.sort_rows();
  artifacts.results_csv = (fs::path(cfg.out_dir) / "results.csv").string();
  artifacts.results.save_csv(artifacts.results_csv);
  {
    std::ofstream md((fs::path(cfg.out_dir) / "results.md").string());
    md << artifacts.results.to_markdown();
  }
  artifacts.source_test_accuracy = 100.0 * source_acc;

  std::string config_text = canonical_config_text(cfg);
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_text)));
  nlohmann::json manifest;
  manifest["format"] = kManifestFormat;
  manifest["config_text"] = config_text;
  manifest["config_hash"] = hash_hex;
  manifest["seed"] = cfg.seed;
  manifest["source_test_accuracy_percent"] = artifacts.source_test_accuracy;
  manifest["results_csv"] = "results.csv";
  artifacts.manifest_path = (fs::path(cfg.out_dir) / "manifest.json").string();
  std::ofstream mos(artifacts.manifest_path);
  if (!mos) raise(ErrorCategory::io, "cannot open manifest.json for writing");
  mos << manifest.dump(2) << "\n";
  return artifacts;
}

ExperimentArtifacts rerun_from_manifest(const std::string& manifest_path,
                                        const std::string& out_dir) {
  std::ifstream is(manifest_path);
  if (!is) raise(ErrorCategory::io, "cannot open manifest '" + manifest_path + "'");
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const std::exception& e) {
    raise(ErrorCategory::parse, "manifest '" + manifest_path + "' is not valid json: " + e.what());
  }
  if (!manifest.contains("format") || manifest["format"] != kManifestFormat)
    raise(ErrorCategory::parse, "manifest '" + manifest_path + "' has an unknown format");
  std::string config_text = manifest.value("config_text", "");
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_text)));
  if (manifest.value("config_hash", "") != hash_hex)
    raise(ErrorCategory::parse, "manifest config hash does not match its config text");
  ExperimentConfig cfg = parse_experiment_config(config_text);
  cfg.out_dir = out_dir;
  return run_experiment(cfg);
}

std::vector<DepthResult> ablate_latent_depth(const ExperimentConfig& base,
                                             const std::vector<int>& depths) {
  base.validate();
  if (depths.empty()) raise(ErrorCategory::config, "depth ablation needs at least one depth");
  for (int d : depths) {
    if (d < 1 || d > static_cast<int>(base.model.channels.size()))
      raise(ErrorCategory::config, "latent depth " + std::to_string(d) +
                                       " is outside [1, " +
                                       std::to_string(base.model.channels.size()) + "]");
    if (std::count(depths.begin(), depths.end(), d) != 1)
      raise(ErrorCategory::config, "latent depth " + std::to_string(d) + " listed twice");
  }
  // Source weights do not depend on the latent placement, so one pretrained
  // checkpoint serves every depth; each run re-pins its own latent block.
  std::string shared_checkpoint;
  if (base.reuse_checkpoint) {
    PairedDataset ds = build_dataset(base.data);
    prepare_source(base, ds);
    shared_checkpoint = (fs::path(base.out_dir) / "source.ltk1").string();
  }
  std::vector<DepthResult> out;
  for (int d : depths) {
    ExperimentConfig cfg = base;
    cfg.model.latent_block = d;
    cfg.out_dir = (fs::path(base.out_dir) / ("depth-" + std::to_string(d))).string();
    if (!shared_checkpoint.empty()) {
      fs::create_directories(cfg.out_dir);
      fs::copy_file(shared_checkpoint, fs::path(cfg.out_dir) / "source.ltk1",
                    fs::copy_options::overwrite_existing);
    }
    DepthResult r;
    r.depth = d;
    r.results = run_experiment(cfg).results;
    out.push_back(std::move(r));
  }
  fs::create_directories(base.out_dir);
  std::ofstream os((fs::path(base.out_dir) / "ablation.csv").string());
  if (!os) raise(ErrorCategory::io, "cannot open ablation.csv for writing");
  os << "depth,method,device,trial,accuracy\n";
  char line[200];
  for (const auto& r : out) {
    for (const auto& row : r.results.rows) {
      std::snprintf(line, sizeof(line), "%d,%s,%s,%d,%.6f\n", r.depth, row.method.c_str(),
                    row.device.c_str(), row.trial, row.accuracy);
      os << line;
    }
  }
  if (!os) raise(ErrorCategory::io, "write to ablation.csv failed");
  return out;
}

}  // namespace ltk
