// SPDX-License-Identifier: Apache-2.0
#include "ltk/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ltk/losses.hpp"
#include "ltk/rng.hpp"

namespace ltk {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << " (tolerance " << tolerance << ")\n";
  for (const auto& e : entries)
    os << "  " << e.name << ": max rel error " << e.max_rel_error << "\n";
  return os.str();
}

GradCheckReport check_gradients(std::vector<std::pair<std::string, Tensor>> params,
                                const std::function<Tensor()>& build_loss,
                                double tolerance, double h, double corruption) {
  GradCheckReport report;
  report.tolerance = tolerance;

  for (auto& [name, p] : params) p.zero_grad();
  Tensor loss = build_loss();
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) {
    analytic.push_back(p.has_grad() ? p.grad()
                                    : std::vector<double>(p.values().size(), 0.0));
  }
  if (corruption != 0.0 && !analytic.empty() && !analytic[0].empty())
    analytic[0][0] += corruption;

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi].second;
    GradCheckEntry entry{params[pi].first, 0.0};
    for (std::size_t i = 0; i < p.values().size(); ++i) {
      double keep = p.values()[i];
      p.values()[i] = keep + h;
      double up = build_loss().item();
      p.values()[i] = keep - h;
      double down = build_loss().item();
      p.values()[i] = keep;
      double fd = (up - down) / (2.0 * h);
      double a = analytic[pi][i];
      double denom = std::max({std::abs(a), std::abs(fd), 1e-3});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(a - fd) / denom);
    }
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.worst() < tolerance;
  return report;
}

namespace {

std::vector<std::pair<std::string, Tensor>> named_parameters(SplitModel& model) {
  std::vector<std::pair<std::string, Tensor>> out;
  int idx = 0;
  for (auto& layer : model.layers()) {
    int pi = 0;
    for (auto& p : layer.parameters()) {
      out.emplace_back("layer" + std::to_string(idx) + "." +
                           layer_kind_name(layer.spec().kind) + ".p" + std::to_string(pi),
                       p);
      ++pi;
    }
    ++idx;
  }
  return out;
}

}  // namespace

GradCheckReport grad_check_model(SplitModel& model, const Tensor& x, const Tensor& y,
                                 double tolerance) {
  auto build = [&]() {
    model.zero_grad();
    return softmax_cross_entropy(model.forward(x, Mode::train), y).loss;
  };
  return check_gradients(named_parameters(model), build, tolerance);
}

GradCheckReport grad_check_latent(SplitModel& model, const Tensor& x, const Tensor& y,
                                  double sigma, const NoiseDraw& noise, double tolerance) {
  auto build = [&]() {
    model.zero_grad();
    Tensor mu = model.forward_pre(x, Mode::train);
    LatentGaussian site{mu, sigma};
    Tensor logits = model.forward_post(sample_latent(site, noise), Mode::train);
    return softmax_cross_entropy(logits, y).loss;
  };
  return check_gradients(named_parameters(model), build, tolerance);
}

namespace {

Tensor random_leaf(Rng& rng, std::vector<int> shape, double lo, double hi,
                   bool requires_grad) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& e : v) e = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor random_one_hot(Rng& rng, int batch, int classes) {
  std::vector<double> v(static_cast<std::size_t>(batch) * static_cast<std::size_t>(classes), 0.0);
  for (int b = 0; b < batch; ++b) {
    std::size_t hot = rng.uniform_int(static_cast<std::uint64_t>(classes));
    v[static_cast<std::size_t>(b) * static_cast<std::size_t>(classes) + hot] = 1.0;
  }
  return Tensor::from_values({batch, classes}, std::move(v));
}

// 8x8 inputs and 2-3 filters keep one finite-difference sweep under a second.
ModelConfig random_micro_config(Rng& rng) {
  ModelConfig mc;
  mc.in_channels = 1;
  mc.height = 8;
  mc.width = 8;
  mc.classes = 3;
  mc.channels = rng.uniform_int(2) == 0 ? std::vector<int>{2} : std::vector<int>{2, 3};
  mc.latent_block = 1 + static_cast<int>(rng.uniform_int(mc.channels.size()));
  mc.seed = rng.next_u64();
  return mc;
}

}  // namespace

std::string GradSuiteResult::to_string() const {
  std::ostringstream os;
  std::size_t ok = 0;
  for (const auto& c : cases) ok += c.passed ? 1u : 0u;
  os << "gradient suite: " << ok << "/" << cases.size() << " cases within " << tolerance
     << ", worst max rel error " << worst << "\n";
  for (const auto& c : cases)
    if (!c.passed) os << "  FAIL " << c.name << ": max rel error " << c.max_rel_error << "\n";
  return os.str();
}

GradSuiteResult run_gradcheck_suite(int cases, std::uint64_t seed, double tolerance) {
  if (cases <= 0) raise(ErrorCategory::usage, "gradient suite needs a positive case count");
  GradSuiteResult result;
  result.tolerance = tolerance;
  static constexpr const char* kBucketNames[] = {"model-ce",  "latent-path", "vbkt-total",
                                                 "tsl-logits", "at-maps",    "sp-gram"};
  for (int i = 0; i < cases; ++i) {
    Rng rng(mix_seed(seed, seed_tag::cell, static_cast<std::uint64_t>(i)));
    const int bucket = i % 6;
    const int batch = 2 + static_cast<int>(rng.uniform_int(2));
    GradCheckReport report;
    switch (bucket) {
      case 0: {
        SplitModel model = SplitModel::build(random_micro_config(rng));
        Tensor x = random_leaf(rng, {batch, 1, 8, 8}, 0.0, 1.0, false);
        Tensor y = random_one_hot(rng, batch, 3);
        report = grad_check_model(model, x, y, tolerance);
        break;
      }
      case 1: {
        SplitModel model = SplitModel::build(random_micro_config(rng));
        Tensor x = random_leaf(rng, {batch, 1, 8, 8}, 0.0, 1.0, false);
        Tensor y = random_one_hot(rng, batch, 3);
        double sigma = rng.uniform(0.1, 0.5);
        NoiseDraw noise = draw_noise(model.latent_shape(batch), rng.next_u64(), 0, i);
        report = grad_check_latent(model, x, y, sigma, noise, tolerance);
        break;
      }
      case 2: {
        ModelConfig mc = random_micro_config(rng);
        SplitModel target = SplitModel::build(mc);
        mc.seed = rng.next_u64();
        SplitModel source = SplitModel::build(mc);
        source.freeze();
        PairedBatch pb;
        pb.x_target = random_leaf(rng, {batch, 1, 8, 8}, 0.0, 1.0, false);
        pb.y = random_one_hot(rng, batch, 3);
        pb.x_source = random_leaf(rng, {batch, 1, 8, 8}, 0.0, 1.0, false);
        TransferConfig tc;
        tc.method = TransferMethod::vbkt;
        tc.sigma = rng.uniform(0.15, 0.5);
        tc.sample_sigma = rng.uniform(0.15, 0.5);
        tc.combine_with_tsl = rng.uniform() < 0.5;
        tc.temperature = rng.uniform(1.0, 4.0);
        NoiseDraw noise = draw_noise(target.latent_shape(batch), rng.next_u64(), 0, i);
        auto build = [&]() {
          target.zero_grad();
          return vbkt_loss(target, source, pb, tc, noise, Mode::train).total;
        };
        report = check_gradients(named_parameters(target), build, tolerance);
        break;
      }
      case 3: {
        const int k = 3 + static_cast<int>(rng.uniform_int(3));
        Tensor student = random_leaf(rng, {batch, k}, -2.0, 2.0, true);
        Tensor teacher = random_leaf(rng, {batch, k}, -2.0, 2.0, false);
        const double temperature = rng.uniform(1.0, 4.0);
        auto build = [&]() {
          student.zero_grad();
          return tsl_loss(student, teacher, temperature);
        };
        report = check_gradients({{"student_logits", student}}, build, tolerance);
        break;
      }
      case 4: {
        Tensor student = random_leaf(rng, {batch, 2, 3, 3}, -1.0, 1.0, true);
        Tensor teacher = random_leaf(rng, {batch, 2, 3, 3}, -1.0, 1.0, false);
        auto build = [&]() {
          student.zero_grad();
          return at_loss(student, teacher);
        };
        report = check_gradients({{"student_fmap", student}}, build, tolerance);
        break;
      }
      default: {
        const int m = 4 + static_cast<int>(rng.uniform_int(3));
        Tensor student = random_leaf(rng, {batch, m}, -1.0, 1.0, true);
        Tensor teacher = random_leaf(rng, {batch, m}, -1.0, 1.0, false);
        auto build = [&]() {
          student.zero_grad();
          return sp_loss(student, teacher);
        };
        report = check_gradients({{"student_hidden", student}}, build, tolerance);
        break;
      }
    }
    GradSuiteCase entry;
    entry.name = "case-" + std::to_string(i) + "-" + kBucketNames[bucket];
    entry.max_rel_error = report.worst();
    entry.passed = report.passed;
    result.worst = std::max(result.worst, entry.max_rel_error);
    result.cases.push_back(std::move(entry));
  }
  result.passed = true;
  for (const auto& c : result.cases) result.passed = result.passed && c.passed;
  return result;
}

}  // namespace ltk
