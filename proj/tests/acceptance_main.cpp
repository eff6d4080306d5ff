// SPDX-License-Identifier: Apache-2.0
// Acceptance gate: one pass/fail line per release criterion, run at the
// default desk-scale configuration. Exit status 0 only when every criterion
// holds.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ltk/data.hpp"
#include "ltk/eval.hpp"
#include "ltk/experiment.hpp"
#include "ltk/gradcheck.hpp"
#include "ltk/latent.hpp"
#include "ltk/losses.hpp"
#include "ltk/model.hpp"
#include "ltk/rng.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int criterion, bool passed, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", criterion, passed ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!passed) ++failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

ltk::Tensor normal_tensor(ltk::Rng& rng, std::vector<int> shape) {
  std::vector<double> v(static_cast<std::size_t>(ltk::shape_numel(shape)));
  for (auto& e : v) e = rng.normal();
  return ltk::Tensor::from_values(std::move(shape), std::move(v));
}

// The default desk-scale experiment restricted to the default target device,
// three trials, deterministic augmentation off.
ltk::ExperimentConfig desk_config(const std::string& out_dir) {
  ltk::ExperimentConfig cfg;
  cfg.methods = {"none", "onehot", "tsl", "vbkt"};
  cfg.devices = {"B"};
  cfg.trials = 3;
  cfg.seed = 1;
  cfg.out_dir = out_dir;
  return cfg;
}

void criterion_1_gradients() {
  auto start = Clock::now();
  auto suite = ltk::run_gradcheck_suite(100, 1, 1e-4);
  double elapsed = seconds_since(start);
  std::size_t passed_cases = 0;
  for (const auto& c : suite.cases) passed_cases += c.passed ? 1 : 0;
  bool ok = suite.passed && elapsed < 120.0;
  report(1, ok,
         fmt("gradient suite %zu/%zu within 1e-4, worst %.3g, %.1fs (limit 120s)",
             passed_cases, suite.cases.size(), suite.worst, elapsed));
  if (!suite.passed) std::printf("%s", suite.to_string().c_str());
}

void criterion_2_kl_oracle() {
  auto start = Clock::now();
  const int draws = 1000000;
  const double sigma = 0.2;
  double worst_rel = 0.0;
  bool ok = true;
  for (int inst = 0; inst < 20; ++inst) {
    ltk::Rng rng(ltk::mix_seed(20, ltk::seed_tag::cell, static_cast<std::uint64_t>(inst)));
    int batch = 2 + static_cast<int>(rng.uniform_int(2));
    int dims = 4 + static_cast<int>(rng.uniform_int(5));
    auto mu_t = normal_tensor(rng, {batch, dims});
    auto mu_s = normal_tensor(rng, {batch, dims});
    double closed = ltk::latent_kl(mu_t, mu_s, sigma).item();

    // Monte Carlo over the log-density ratio with z drawn from the first
    // Gaussian; normalization constants cancel because sigma is shared.
    ltk::Rng mc_rng(rng.next_u64());
    double mc = 0.0;
    for (int b = 0; b < batch; ++b) {
      double acc = 0.0;
      for (int d = 0; d < draws; ++d) {
        double num = 0.0, den = 0.0;
        for (int k = 0; k < dims; ++k) {
          double eps = mc_rng.normal();
          double z = mu_t[b * dims + k] + sigma * eps;
          double dt = z - mu_t[b * dims + k];
          double dsrc = z - mu_s[b * dims + k];
          num += dsrc * dsrc;
          den += dt * dt;
        }
        acc += (num - den) / (2.0 * sigma * sigma);
      }
      mc += acc / draws;
    }
    mc /= batch;
    double rel = std::abs(mc - closed) / closed;
    worst_rel = std::max(worst_rel, rel);
    if (rel >= 0.01) ok = false;
  }
  double elapsed = seconds_since(start);
  ok = ok && elapsed < 60.0;
  report(2, ok,
         fmt("closed-form kl vs 1e6-draw mc on 20 instances, worst rel %.3g (limit 1%%), "
             "%.1fs (limit 60s)",
             worst_rel, elapsed));
}

void criterion_3_sampling_stats() {
  const double sigma = 0.2;
  const int draws = 100000;
  ltk::Rng rng(30);
  auto mu = normal_tensor(rng, {4, 6});
  ltk::LatentGaussian site{mu, sigma};
  std::size_t n = mu.values().size();
  std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
  for (int d = 0; d < draws; ++d) {
    auto noise = ltk::draw_noise(mu.shape(), 31, 0, d);
    auto z = ltk::sample_latent(site, noise);
    for (std::size_t i = 0; i < n; ++i) {
      double v = z[static_cast<std::int64_t>(i)];
      sum[i] += v;
      sumsq[i] += v * v;
    }
  }
  double se_mean = sigma / std::sqrt(static_cast<double>(draws));
  double se_std = sigma / std::sqrt(2.0 * (draws - 1));
  double worst_mean_z = 0.0, worst_std_z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mean = sum[i] / draws;
    double var = (sumsq[i] - sum[i] * sum[i] / draws) / (draws - 1);
    double sd = std::sqrt(var);
    worst_mean_z = std::max(worst_mean_z, std::abs(mean - mu[static_cast<std::int64_t>(i)]) / se_mean);
    worst_std_z = std::max(worst_std_z, std::abs(sd - sigma) / se_std);
  }
  bool ok = worst_mean_z < 3.0 && worst_std_z < 3.0;
  report(3, ok,
         fmt("latent draws over 1e5 samples: worst mean dev %.2f se, worst std dev %.2f se "
             "(limit 3)",
             worst_mean_z, worst_std_z));
}

struct OrderingOutcome {
  ltk::ExperimentConfig cfg;
  ltk::ExperimentArtifacts artifacts;
  double elapsed = 0.0;
};

OrderingOutcome run_ordering(const std::string& out_root) {
  OrderingOutcome o;
  o.cfg = desk_config(out_root + "/ordering");
  auto start = Clock::now();
  o.artifacts = ltk::run_experiment(o.cfg);
  o.elapsed = seconds_since(start);
  return o;
}

void criterion_4_collapse(const OrderingOutcome& o) {
  auto ds = ltk::build_dataset(o.cfg.data);
  auto source = ltk::SplitModel::load(o.cfg.out_dir + "/source.ltk1");
  source.freeze();
  double on_source = o.artifacts.source_test_accuracy;
  double on_target = 100.0 * ltk::evaluate_accuracy(source, ds.target("B").test);
  double drop = on_source - on_target;
  report(4, drop >= 20.0,
         fmt("source model %.2f%% on its own domain vs %.2f%% on device B, drop %.2f pts "
             "(needs >= 20)",
             on_source, on_target, drop));
}

void criterion_5_ordering(const OrderingOutcome& o) {
  const auto& t = o.artifacts.results;
  double none = t.device_mean("none", "B");
  double onehot = t.device_mean("onehot", "B");
  double tsl = t.device_mean("tsl", "B");
  double vbkt = t.device_mean("vbkt", "B");
  bool order = none < onehot && onehot < tsl && tsl <= vbkt;
  bool margin = vbkt - onehot >= 2.0;
  bool in_time = o.elapsed < 1800.0;
  report(5, order && margin && in_time,
         fmt("3-trial means on B: none %.2f < onehot %.2f < tsl %.2f <= vbkt %.2f, "
             "vbkt-onehot %.2f pts (needs >= 2), %.0fs (limit 1800s)",
             none, onehot, tsl, vbkt, vbkt - onehot, o.elapsed));
}

void criterion_6_limit(const OrderingOutcome& o, const std::string& out_root) {
  ltk::ExperimentConfig cfg = desk_config(out_root + "/limit");
  cfg.methods = {"vbkt"};
  cfg.transfer.sigma = 1e6;
  fs::create_directories(cfg.out_dir);
  fs::copy_file(o.cfg.out_dir + "/source.ltk1", cfg.out_dir + "/source.ltk1",
                fs::copy_options::overwrite_existing);
  auto artifacts = ltk::run_experiment(cfg);

  auto spread = [](const std::vector<double>& cells) {
    double lo = cells[0], hi = cells[0];
    for (double c : cells) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    return std::pair<double, double>(lo, hi);
  };
  auto onehot_cells = o.artifacts.results.cells("onehot", "B");
  auto limit_cells = artifacts.results.cells("vbkt", "B");
  auto [olo, ohi] = spread(onehot_cells);
  auto [vlo, vhi] = spread(limit_cells);
  double om = o.artifacts.results.device_mean("onehot", "B");
  double vm = artifacts.results.device_mean("vbkt", "B");
  double gap = std::abs(vm - om);
  double band = std::max(ohi - olo, vhi - vlo);
  bool overlap = vlo <= ohi && olo <= vhi;
  report(6, overlap || gap <= band,
         fmt("vbkt at kl weight ~0 mean %.2f (range %.2f..%.2f) vs onehot mean %.2f "
             "(range %.2f..%.2f): gap %.2f, trial band %.2f",
             vm, vlo, vhi, om, olo, ohi, gap, band));
}

void criterion_7_fixed_point() {
  ltk::ModelConfig mc;
  mc.height = 12;
  mc.width = 16;
  mc.classes = 4;
  mc.channels = {2, 3};
  mc.latent_block = 2;
  mc.seed = 70;
  auto student = ltk::SplitModel::build(mc);
  auto teacher = student.clone();
  teacher.freeze();

  ltk::Rng rng(71);
  std::vector<double> x(static_cast<std::size_t>(4) * 12 * 16);
  for (auto& e : x) e = rng.uniform();
  ltk::PairedBatch batch;
  batch.x_target = ltk::Tensor::from_values({4, 1, 12, 16}, x);
  batch.x_source = ltk::Tensor::from_values({4, 1, 12, 16}, x);
  std::vector<double> y(static_cast<std::size_t>(4) * 4, 0.0);
  for (int b = 0; b < 4; ++b) y[static_cast<std::size_t>(b) * 4 + b % 4] = 1.0;
  batch.y = ltk::Tensor::from_values({4, 4}, y);

  struct Probe {
    ltk::TransferMethod method;
    const char* term;
  };
  const std::vector<Probe> probes = {
      {ltk::TransferMethod::tsl, "tsl"},   {ltk::TransferMethod::fitnet, "fitnet"},
      {ltk::TransferMethod::at, "at"},     {ltk::TransferMethod::sp, "sp"},
      {ltk::TransferMethod::vbkt, "vbkt"},
  };
  bool ok = true;
  std::string detail = "self-distillation terms:";
  for (const auto& probe : probes) {
    ltk::TransferConfig tc;
    tc.method = probe.method;
    auto breakdown = ltk::transfer_loss(student, &teacher, batch, tc, ltk::NoiseKey{72, 0, 0},
                                        ltk::Mode::eval);
    double term = 0.0;
    if (probe.method == ltk::TransferMethod::tsl) term = breakdown.tsl_term.item();
    else if (probe.method == ltk::TransferMethod::vbkt) term = breakdown.kl_latent.item();
    else term = breakdown.aux_term.item();
    bool zero = term == 0.0;
    ok = ok && zero;
    detail += fmt(" %s=%g", probe.term, term);
  }
  report(7, ok, detail + " (all must be exactly 0)");
}

void criterion_8_discrepancy(const OrderingOutcome& o) {
  std::ifstream is(o.cfg.out_dir + "/discrepancy.csv");
  std::string line;
  std::getline(is, line);  // header
  double vbkt = -1.0, tsl = -1.0;
  while (std::getline(is, line)) {
    std::istringstream row(line);
    std::string method, device, value;
    std::getline(row, method, ',');
    std::getline(row, device, ',');
    std::getline(row, value, ',');
    if (method == "vbkt") vbkt = std::stod(value);
    if (method == "tsl") tsl = std::stod(value);
  }
  bool ok = vbkt >= 0.0 && tsl >= 0.0 && vbkt <= tsl;
  report(8, ok,
         fmt("mean off-diagonal logit discrepancy on B: vbkt %.4f <= tsl %.4f", vbkt, tsl));
}

void criterion_9_depth(const OrderingOutcome& o, const std::string& out_root) {
  ltk::ExperimentConfig cfg = desk_config(out_root + "/depth");
  cfg.methods = {"vbkt"};
  fs::create_directories(cfg.out_dir);
  fs::copy_file(o.cfg.out_dir + "/source.ltk1", cfg.out_dir + "/source.ltk1",
                fs::copy_options::overwrite_existing);
  auto sweeps = ltk::ablate_latent_depth(cfg, {1, 3});
  double shallow = sweeps[0].results.device_mean("vbkt", "B");
  double deep = sweeps[1].results.device_mean("vbkt", "B");
  double primary = o.artifacts.results.device_mean("vbkt", "B");
  bool consistent = deep == primary;
  report(9, deep >= shallow && consistent,
         fmt("latent at block 3 %.2f%% >= block 1 %.2f%%; deep run %s the primary sweep",
             deep, shallow, consistent ? "matches" : "DIVERGES FROM"));
}

void criterion_10_determinism(const std::string& out_root) {
  ltk::ExperimentConfig cfg;
  cfg.data = ltk::DataConfig::small();
  cfg.methods = {"onehot", "vbkt"};
  cfg.devices = {"B", "C"};
  cfg.trials = 2;
  cfg.seed = 100;
  cfg.pretrain.total_epochs = 8;
  cfg.pretrain.cycle_length_epochs = 4;
  cfg.schedule.total_epochs = 8;
  cfg.schedule.cycle_length_epochs = 4;
  cfg.heatmap_samples = 8;
  cfg.out_dir = out_root + "/repro";
  auto first = ltk::run_experiment(cfg);
  auto second = ltk::rerun_from_manifest(first.manifest_path, out_root + "/repro-rerun");

  auto slurp = [](const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  std::string a = slurp(first.results_csv);
  std::string b = slurp(second.results_csv);
  bool ok = !a.empty() && a == b;
  report(10, ok, fmt("manifest rerun results.csv byte-identical (%zu bytes)", a.size()));
}

}  // namespace

int main(int argc, char** argv) {
  std::string out_root = argc > 1 ? argv[1] : "acceptance-out";
  fs::create_directories(out_root);
  auto total_start = Clock::now();
  try {
    criterion_1_gradients();
    criterion_2_kl_oracle();
    criterion_3_sampling_stats();
    auto ordering = run_ordering(out_root);
    criterion_4_collapse(ordering);
    criterion_5_ordering(ordering);
    criterion_6_limit(ordering, out_root);
    criterion_7_fixed_point();
    criterion_8_discrepancy(ordering);
    criterion_9_depth(ordering, out_root);
    criterion_10_determinism(out_root);
  } catch (const ltk::Error& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("acceptance: %d/10 criteria passed, %.0fs total\n", 10 - failures,
              seconds_since(total_start));
  return failures == 0 ? 0 : 1;
}
