// SPDX-License-Identifier: Apache-2.0
// Command-line front end: dataset generation, source pretraining, transfer
// sweeps, latent-depth ablation, result reporting, and the gradient suite.
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ltk/data.hpp"
#include "ltk/error.hpp"
#include "ltk/eval.hpp"
#include "ltk/experiment.hpp"
#include "ltk/gradcheck.hpp"

namespace fs = std::filesystem;

namespace {

// Config file if given, else the small preset, else library defaults.
ltk::ExperimentConfig resolve_config(const std::string& config_path, bool small) {
  if (!config_path.empty() && small)
    ltk::raise(ltk::ErrorCategory::usage, "--config and --small are mutually exclusive");
  ltk::ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = ltk::load_experiment_config(config_path);
  } else if (small) {
    cfg.data = ltk::DataConfig::small();
  }
  return cfg;
}

void print_sweep(const ltk::ExperimentArtifacts& artifacts) {
  std::printf("source test accuracy: %.2f%%\n\n", artifacts.source_test_accuracy);
  std::printf("%s\n", artifacts.results.to_markdown().c_str());
  std::printf("results: %s\n", artifacts.results_csv.c_str());
  std::printf("manifest: %s\n", artifacts.manifest_path.c_str());
}

int run(int argc, char** argv) {
  CLI::App app{"variational latent knowledge transfer toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string manifest_path;
  std::string results_path;
  bool small = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int trials = 0;
  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "override the experiment seed")
        ->each([&](const std::string&) { seed_set = true; });
  };

  auto* gen = app.add_subcommand("gen-data", "write the paired corpus and pairing manifest");
  gen->add_option("--config", config_path, "experiment config supplying the data section")
      ->check(CLI::ExistingFile);
  gen->add_flag("--small", small, "use the small data preset");
  gen->add_option("--out", out_dir, "output directory")->required();
  add_seed(gen);
  gen->callback([&] {
    ltk::ExperimentConfig cfg = resolve_config(config_path, small);
    if (seed_set) cfg.data.seed = seed;
    ltk::PairedDataset ds = ltk::build_dataset(cfg.data);
    fs::create_directories(out_dir);
    std::string data_path = (fs::path(out_dir) / "dataset.ltkd").string();
    std::string pairs_path = (fs::path(out_dir) / "pairs.tsv").string();
    ltk::save_dataset(ds, data_path);
    ltk::save_pairs(ds, pairs_path);
    std::size_t target_train = 0, target_test = 0;
    for (const auto& [name, split] : ds.targets) {
      target_train += split.train.size();
      target_test += split.test.size();
    }
    std::printf("wrote %s\n", data_path.c_str());
    std::printf("wrote %s\n", pairs_path.c_str());
    std::printf("source train/test: %zu/%zu, target devices: %zu, target train/test: %zu/%zu\n",
                ds.source.train.size(), ds.source.test.size(), ds.targets.size(), target_train,
                target_test);
  });

  auto* pre = app.add_subcommand("pretrain", "train the reference-device model checkpoint");
  pre->add_option("--config", config_path, "experiment config")->check(CLI::ExistingFile);
  pre->add_flag("--small", small, "use the small data preset");
  pre->add_option("--out", out_dir, "override the output directory");
  add_seed(pre);
  pre->callback([&] {
    ltk::ExperimentConfig cfg = resolve_config(config_path, small);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();
    ltk::PairedDataset ds = ltk::build_dataset(cfg.data);
    double acc = 0.0;
    ltk::prepare_source(cfg, ds, &acc);
    std::printf("checkpoint: %s\n", (fs::path(cfg.out_dir) / "source.ltk1").string().c_str());
    std::printf("source test accuracy: %.2f%%\n", 100.0 * acc);
  });

  auto* tr = app.add_subcommand("transfer", "run the method x device x trial sweep");
  auto* tr_config = tr->add_option("--config", config_path, "experiment config")
                        ->check(CLI::ExistingFile);
  auto* tr_manifest =
      tr->add_option("--manifest", manifest_path, "rerun the experiment a manifest records")
          ->check(CLI::ExistingFile)
          ->excludes(tr_config);
  tr->add_option("--out", out_dir, "override the output directory");
  tr->add_option("--trials", trials, "override the trial count")->check(CLI::PositiveNumber);
  add_seed(tr);
  tr->callback([&] {
    ltk::ExperimentArtifacts artifacts;
    if (!manifest_path.empty()) {
      if (out_dir.empty())
        ltk::raise(ltk::ErrorCategory::usage, "--manifest requires --out for the rerun");
      artifacts = ltk::rerun_from_manifest(manifest_path, out_dir);
    } else {
      if (config_path.empty())
        ltk::raise(ltk::ErrorCategory::usage, "transfer needs --config or --manifest");
      ltk::ExperimentConfig cfg = ltk::load_experiment_config(config_path);
      if (seed_set) cfg.seed = seed;
      if (trials > 0) cfg.trials = trials;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      artifacts = ltk::run_experiment(cfg);
    }
    print_sweep(artifacts);
  });
  (void)tr_manifest;

  auto* ab = app.add_subcommand("ablate-depth", "sweep the latent site over conv blocks");
  ab->add_option("--config", config_path, "experiment config")
      ->check(CLI::ExistingFile)
      ->required();
  std::vector<int> depths;
  ab->add_option("--depths", depths, "1-based conv blocks to place the latent on")
      ->required()
      ->delimiter(',');
  ab->add_option("--out", out_dir, "override the output directory");
  add_seed(ab);
  ab->callback([&] {
    ltk::ExperimentConfig cfg = ltk::load_experiment_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    auto sweeps = ltk::ablate_latent_depth(cfg, depths);
    for (const auto& sweep : sweeps) {
      std::printf("latent depth %d\n%s\n", sweep.depth, sweep.results.to_markdown().c_str());
    }
    std::printf("combined: %s\n", (fs::path(cfg.out_dir) / "ablation.csv").string().c_str());
  });

  auto* rep = app.add_subcommand("report", "render a results table as markdown");
  rep->add_option("--results", results_path, "results.csv from a sweep")
      ->check(CLI::ExistingFile)
      ->required();
  rep->callback([&] {
    ltk::ResultTable table = ltk::ResultTable::load_csv(results_path);
    std::printf("%s", table.to_markdown().c_str());
  });

  auto* gc = app.add_subcommand("gradcheck", "finite-difference the autodiff engine");
  int cases = 100;
  double tolerance = 1e-4;
  std::uint64_t gc_seed = 1;
  gc->add_option("--cases", cases, "number of randomized micro-cases")
      ->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "suite seed");
  gc->add_option("--tolerance", tolerance, "max relative error allowed");
  gc->callback([&] {
    ltk::GradSuiteResult suite = ltk::run_gradcheck_suite(cases, gc_seed, tolerance);
    std::printf("%s", suite.to_string().c_str());
    if (!suite.passed)
      ltk::raise(ltk::ErrorCategory::validation, "gradient suite exceeded tolerance");
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ltk::Error& e) {
    std::fprintf(stderr, "ltk: %s\n", e.what());
    return e.exit_code();
  }
}
