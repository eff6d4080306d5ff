// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ltk/gradcheck.hpp"
#include "ltk/losses.hpp"
#include "ltk/rng.hpp"

using ltk::Mode;
using ltk::ModelConfig;
using ltk::SplitModel;
using ltk::Tensor;
using ltk::TransferConfig;
using ltk::TransferMethod;

namespace {

ModelConfig tiny_config(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.in_channels = 1;
  cfg.height = 8;
  cfg.width = 8;
  cfg.classes = 3;
  cfg.channels = {2, 3};
  cfg.kernel = 3;
  cfg.latent_block = 2;
  cfg.seed = seed;
  return cfg;
}

Tensor random_input(int batch, std::uint64_t seed) {
  auto x = Tensor::zeros({batch, 1, 8, 8});
  ltk::Rng rng(seed);
  for (auto& v : x.values()) v = rng.uniform(0, 1);
  return x;
}

Tensor one_hot_rows(const std::vector<int>& labels, int k) {
  auto y = Tensor::zeros({static_cast<int>(labels.size()), k});
  for (std::size_t i = 0; i < labels.size(); ++i)
    y.values()[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(labels[i])] = 1.0;
  return y;
}

ltk::PairedBatch tiny_batch(std::uint64_t seed) {
  ltk::PairedBatch b;
  b.x_target = random_input(2, seed);
  b.x_source = random_input(2, seed + 1);
  b.y = one_hot_rows({0, 2}, 3);
  return b;
}

}  // namespace

TEST_CASE("cross entropy on uniform and saturated logits") {
  auto r1 = ltk::softmax_cross_entropy(Tensor::from_values({1, 2}, {0, 0}),
                                       Tensor::from_values({1, 2}, {1, 0}));
  CHECK(r1.loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  auto r2 = ltk::softmax_cross_entropy(Tensor::from_values({1, 2}, {100, 0}),
                                       Tensor::from_values({1, 2}, {1, 0}));
  CHECK(r2.loss.item() < 1e-10);
  CHECK(r2.loss.item() >= 0.0);
}

TEST_CASE("cross entropy with soft labels against direct summation") {
  auto logits = Tensor::from_values({1, 2}, {1, 2});
  auto labels = Tensor::from_values({1, 2}, {0.5, 0.5});
  auto res = ltk::softmax_cross_entropy(logits, labels);

  double z = std::exp(1.0) + std::exp(2.0);
  double want = -(0.5 * std::log(std::exp(1.0) / z) + 0.5 * std::log(std::exp(2.0) / z));
  CHECK(res.loss.item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("cross entropy validates label rows") {
  auto logits = Tensor::zeros({1, 3});
  try {
    ltk::softmax_cross_entropy(logits, Tensor::from_values({1, 3}, {0.5, 0.2, 0.2}));
    FAIL("expected throw");
  } catch (const ltk::Error& e) {
    CHECK(e.category() == ltk::ErrorCategory::validation);
  }
  CHECK_NOTHROW(ltk::softmax_cross_entropy(
      logits, Tensor::from_values({1, 3}, {0.3333334, 0.3333333, 0.3333333})));
}

TEST_CASE("cached probabilities are a softmax") {
  ltk::Rng rng(9);
  auto logits = Tensor::zeros({5, 4});
  for (auto& v : logits.values()) v = rng.uniform(-30, 30);
  auto labels = one_hot_rows({0, 1, 2, 3, 0}, 4);
  auto res = ltk::softmax_cross_entropy(logits, labels);
  for (int r = 0; r < 5; ++r) {
    double s = 0.0;
    for (int c = 0; c < 4; ++c) {
      double p = res.probs[r * 4 + c];
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  CHECK(res.loss.item() >= 0.0);
}

TEST_CASE("cross entropy gradient is (p - t) / B") {
  ltk::Rng rng(10);
  auto logits = Tensor::zeros({3, 4}, true);
  for (auto& v : logits.values()) v = rng.normal();
  auto labels = one_hot_rows({1, 3, 0}, 4);

  auto res = ltk::softmax_cross_entropy(logits, labels);
  res.loss.backward();
  for (int i = 0; i < 12; ++i) {
    double want = (res.probs[i] - labels[i]) / 3.0;
    CHECK(logits.grad()[static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-12));
  }

  auto build = [&]() {
    logits.zero_grad();
    return ltk::softmax_cross_entropy(logits, labels).loss;
  };
  auto report = ltk::check_gradients({{"logits", logits}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("soft-label distillation loss values") {
  auto same = Tensor::from_values({1, 2}, {0.4, -1.2});
  CHECK(ltk::tsl_loss(same, same, 1.0).item() == 0.0);

  auto teacher = Tensor::from_values({1, 2}, {std::log(2.0), 0.0});
  auto student = Tensor::from_values({1, 2}, {0.0, 0.0});
  double pt0 = 2.0 / 3.0, pt1 = 1.0 / 3.0;
  double want = pt0 * std::log(pt0 / 0.5) + pt1 * std::log(pt1 / 0.5);
  CHECK(ltk::tsl_loss(student, teacher, 1.0).item() == doctest::Approx(want).epsilon(1e-12));

  CHECK_THROWS_AS(ltk::tsl_loss(student, teacher, 0.0), ltk::Error);
  CHECK_THROWS_AS(ltk::tsl_loss(student, teacher, -1.0), ltk::Error);
}

TEST_CASE("distillation temperature scales as T squared over softened rows") {
  auto teacher = Tensor::from_values({2, 3}, {1, 0, -1, 2, 2, 0});
  auto student = Tensor::from_values({2, 3}, {0, 1, 0, 1, -1, 2});
  const double t = 2.0;

  auto soften = [&](const Tensor& logits, int row, int k) {
    std::vector<double> p(static_cast<std::size_t>(k));
    double mx = -1e300;
    for (int c = 0; c < k; ++c) mx = std::max(mx, logits[row * k + c] / t);
    double z = 0.0;
    for (int c = 0; c < k; ++c) {
      p[static_cast<std::size_t>(c)] = std::exp(logits[row * k + c] / t - mx);
      z += p[static_cast<std::size_t>(c)];
    }
    for (auto& v : p) v /= z;
    return p;
  };
  double want = 0.0;
  for (int r = 0; r < 2; ++r) {
    auto pt = soften(teacher, r, 3);
    auto ps = soften(student, r, 3);
    for (int c = 0; c < 3; ++c) want += pt[static_cast<std::size_t>(c)] *
                                        (std::log(pt[static_cast<std::size_t>(c)]) -
                                         std::log(ps[static_cast<std::size_t>(c)]));
  }
  want *= t * t / 2.0;
  CHECK(ltk::tsl_loss(student, teacher, t).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("distillation gradient flows to the student only") {
  ltk::Rng rng(12);
  auto student = Tensor::zeros({3, 4}, true);
  auto teacher = Tensor::zeros({3, 4}, true);
  for (auto& v : student.values()) v = rng.normal();
  for (auto& v : teacher.values()) v = rng.normal();

  auto loss = ltk::tsl_loss(student, teacher, 1.5);
  loss.backward();
  CHECK(student.has_grad());
  CHECK_FALSE(teacher.has_grad());

  auto build = [&]() {
    student.zero_grad();
    return ltk::tsl_loss(student, teacher, 1.5);
  };
  auto report = ltk::check_gradients({{"student", student}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("hidden-embedding loss arithmetic and identity with the latent pull") {
  auto h = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  CHECK(ltk::fitnet_loss(h, h).item() == 0.0);

  auto hs = Tensor::from_values({1, 2}, {1, 1});
  auto ht = Tensor::from_values({1, 2}, {0, 0});
  CHECK(ltk::fitnet_loss(hs, ht).item() == doctest::Approx(2.0));

  CHECK_THROWS_AS(ltk::fitnet_loss(hs, Tensor::zeros({1, 3})), ltk::Error);

  // Same quadratic up to the 1/(2 sigma^2) factor.
  ltk::Rng rng(13);
  auto a = Tensor::zeros({4, 6});
  auto b = Tensor::zeros({4, 6});
  for (auto& v : a.values()) v = rng.normal();
  for (auto& v : b.values()) v = rng.normal();
  for (double sigma : {0.1, 0.2, 1.0}) {
    double lhs = ltk::fitnet_loss(a, b).item();
    double rhs = 2.0 * sigma * sigma * ltk::latent_kl(a, b, sigma).item();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("attention transfer on hand-normalized maps") {
  auto s = Tensor::from_values({1, 1, 2, 2}, {1, 0, 0, 0});
  auto t = Tensor::from_values({1, 1, 2, 2}, {0, 1, 0, 0});
  CHECK(ltk::at_loss(s, t).item() == doctest::Approx(2.0));
  CHECK(ltk::at_loss(s, s).item() == 0.0);
}

TEST_CASE("attention transfer ignores positive scaling") {
  ltk::Rng rng(14);
  auto s = Tensor::zeros({2, 3, 4, 4});
  for (auto& v : s.values()) v = rng.normal();
  auto t = ltk::scale(s, 3.7);
  CHECK(ltk::at_loss(s, t).item() == doctest::Approx(0.0).epsilon(1e-12));

  auto u = Tensor::zeros({2, 3, 4, 4});
  for (auto& v : u.values()) v = rng.normal();
  double base = ltk::at_loss(s, u).item();
  CHECK(ltk::at_loss(ltk::scale(s, 12.0), u).item() == doctest::Approx(base).epsilon(1e-9));
  CHECK(ltk::at_loss(s, ltk::scale(u, 0.25)).item() == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("attention transfer guards zero-energy maps") {
  auto s = Tensor::zeros({1, 2, 2, 2});
  auto t = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(ltk::at_loss(s, t).item() == 0.0);

  // Mixed batch: the healthy example still contributes.
  auto s2 = Tensor::from_values({2, 1, 1, 2}, {0, 0, 1, 0});
  auto t2 = Tensor::from_values({2, 1, 1, 2}, {1, 0, 0, 1});
  double loss = ltk::at_loss(s2, t2).item();
  CHECK(loss == doctest::Approx(1.0));  // only the second example counts
}

TEST_CASE("attention transfer gradients match finite differences") {
  ltk::Rng rng(15);
  auto s = Tensor::zeros({2, 2, 3, 3}, true);
  auto t = Tensor::zeros({2, 2, 3, 3});
  for (auto& v : s.values()) v = rng.uniform(0.2, 1.0);
  for (auto& v : t.values()) v = rng.uniform(0.2, 1.0);
  auto build = [&]() {
    s.zero_grad();
    return ltk::at_loss(s, t);
  };
  auto report = ltk::check_gradients({{"s", s}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("similarity transfer basics") {
  auto h = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(ltk::sp_loss(h, h).item() == 0.0);
  CHECK_THROWS_AS(ltk::sp_loss(Tensor::zeros({1, 3}), Tensor::zeros({1, 3})), ltk::Error);
  CHECK_THROWS_AS(ltk::sp_loss(h, Tensor::zeros({2, 4})), ltk::Error);
}

TEST_CASE("similarity transfer is invariant to right-orthogonal maps") {
  ltk::Rng rng(16);
  auto h = Tensor::zeros({3, 2});
  for (auto& v : h.values()) v = rng.normal();
  // 2x2 rotation
  double th = 0.7;
  auto r = Tensor::from_values({2, 2},
                               {std::cos(th), -std::sin(th), std::sin(th), std::cos(th)});
  auto hr = ltk::matmul(h, r);
  CHECK(ltk::sp_loss(h, hr).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("similarity transfer against an explicit Gram computation") {
  auto hs = Tensor::from_values({2, 2}, {1, 0, 1, 1});
  auto ht = Tensor::from_values({2, 2}, {0, 2, 1, 0});

  auto gram_normalized = [](const std::vector<std::vector<double>>& rows) {
    std::vector<std::vector<double>> g(2, std::vector<double>(2));
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            rows[static_cast<std::size_t>(i)][0] * rows[static_cast<std::size_t>(j)][0] +
            rows[static_cast<std::size_t>(i)][1] * rows[static_cast<std::size_t>(j)][1];
    for (int i = 0; i < 2; ++i) {
      double n = std::sqrt(g[static_cast<std::size_t>(i)][0] * g[static_cast<std::size_t>(i)][0] +
                           g[static_cast<std::size_t>(i)][1] * g[static_cast<std::size_t>(i)][1]);
      for (int j = 0; j < 2; ++j) g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] /= n;
    }
    return g;
  };
  auto gs = gram_normalized({{1, 0}, {1, 1}});
  auto gt = gram_normalized({{0, 2}, {1, 0}});
  double want = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double d = gs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
                 gt[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      want += d * d;
    }
  want /= 4.0;
  CHECK(ltk::sp_loss(hs, ht).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("similarity transfer gradients match finite differences") {
  ltk::Rng rng(18);
  auto s = Tensor::zeros({3, 4}, true);
  auto t = Tensor::zeros({3, 4});
  for (auto& v : s.values()) v = rng.normal();
  for (auto& v : t.values()) v = rng.normal();
  auto build = [&]() {
    s.zero_grad();
    return ltk::sp_loss(s, t);
  };
  auto report = ltk::check_gradients({{"s", s}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("blending with soft labels") {
  TransferConfig cfg;
  cfg.method = TransferMethod::tsl;
  ltk::LossBreakdown task;
  task.likelihood = Tensor::scalar(1.0);
  task.kl_latent = Tensor::scalar(0.0);
  task.aux_term = Tensor::scalar(0.0);
  task.total = task.likelihood;

  auto blended = ltk::combine_with_tsl(task, Tensor::scalar(0.0), cfg);
  CHECK(blended.likelihood.item() == doctest::Approx(0.1));

  auto equal = ltk::combine_with_tsl(task, Tensor::scalar(1.0), cfg);
  CHECK(equal.likelihood.item() == doctest::Approx(1.0));

  TransferConfig bad;
  bad.method = TransferMethod::tsl;
  bad.tsl_weight = 0.8;
  CHECK_THROWS_AS(bad.validate(), ltk::Error);
}

TEST_CASE("every method yields a defined breakdown") {
  auto source = SplitModel::build(tiny_config(21));
  source.freeze();
  auto batch = tiny_batch(500);

  for (auto method : {TransferMethod::none, TransferMethod::onehot_finetune,
                      TransferMethod::tsl, TransferMethod::fitnet, TransferMethod::at,
                      TransferMethod::sp, TransferMethod::vbkt}) {
    auto target = SplitModel::build(tiny_config(22));
    TransferConfig cfg;
    cfg.method = method;
    auto breakdown = ltk::transfer_loss(target, &source, batch, cfg, {77, 0, 0});
    CHECK(breakdown.total.defined());
    CHECK(std::isfinite(breakdown.total.item()));
    CHECK(std::isfinite(breakdown.likelihood.item()));
    CHECK(std::isfinite(breakdown.kl_latent.item()));
    CHECK(std::isfinite(breakdown.tsl_term.item()));
    CHECK(std::isfinite(breakdown.aux_term.item()));

    if (method == TransferMethod::none || method == TransferMethod::onehot_finetune) {
      CHECK(breakdown.total.item() == breakdown.likelihood.item());
      CHECK(breakdown.kl_latent.item() == 0.0);
      CHECK(breakdown.aux_term.item() == 0.0);
    }
    if (method == TransferMethod::vbkt) CHECK(breakdown.kl_latent.item() > 0.0);
  }
}

TEST_CASE("hard-label methods work without a source model") {
  auto target = SplitModel::build(tiny_config(23));
  ltk::PairedBatch batch;
  batch.x_target = random_input(2, 600);
  batch.y = one_hot_rows({1, 2}, 3);

  TransferConfig cfg;
  cfg.method = TransferMethod::none;
  auto breakdown = ltk::transfer_loss(target, nullptr, batch, cfg, {});
  CHECK(breakdown.total.item() > 0.0);

  cfg.method = TransferMethod::vbkt;
  CHECK_THROWS_AS(ltk::transfer_loss(target, nullptr, batch, cfg, {}), ltk::Error);
}

TEST_CASE("transfer requires a frozen source and aligned pairs") {
  auto source = SplitModel::build(tiny_config(24));
  auto target = SplitModel::build(tiny_config(25));
  auto batch = tiny_batch(700);
  TransferConfig cfg;
  cfg.method = TransferMethod::vbkt;

  try {
    ltk::transfer_loss(target, &source, batch, cfg, {1, 0, 0});
    FAIL("expected throw");
  } catch (const ltk::Error& e) {
    CHECK(e.category() == ltk::ErrorCategory::usage);
  }

  source.freeze();
  auto broken = batch;
  broken.x_source = random_input(3, 800);
  try {
    ltk::transfer_loss(target, &source, broken, cfg, {1, 0, 0});
    FAIL("expected throw");
  } catch (const ltk::Error& e) {
    CHECK(e.category() == ltk::ErrorCategory::data);
  }

  auto unpaired = batch;
  unpaired.x_source = Tensor();
  CHECK_THROWS_AS(ltk::transfer_loss(target, &source, unpaired, cfg, {1, 0, 0}),
                  ltk::Error);
}

TEST_CASE("self-distillation fixed point is exactly zero for every pull term") {
  // Both sides must see the same statistics for the zero to be exact, so the
  // student runs in eval mode here; train mode would mix batch statistics
  // into its side only.
  auto source = SplitModel::build(tiny_config(26));
  auto target = source.clone();
  source.freeze();

  ltk::PairedBatch batch;
  batch.x_target = random_input(2, 900);
  batch.x_source = batch.x_target;  // identical content and device
  batch.y = one_hot_rows({0, 1}, 3);

  for (auto method : {TransferMethod::tsl, TransferMethod::fitnet, TransferMethod::at,
                      TransferMethod::sp}) {
    TransferConfig cfg;
    cfg.method = method;
    auto breakdown =
        ltk::transfer_loss(target, &source, batch, cfg, {5, 0, 0}, Mode::eval);
    if (method == TransferMethod::tsl)
      CHECK(breakdown.tsl_term.item() == 0.0);
    else
      CHECK(breakdown.aux_term.item() == 0.0);
  }

  // With pinned zero noise the variational path sees identical means.
  TransferConfig cfg;
  cfg.method = TransferMethod::vbkt;
  ltk::NoiseDraw zero;
  zero.epsilon = Tensor::zeros(target.latent_shape(2));
  auto breakdown = ltk::vbkt_loss(target, source, batch, cfg, zero, Mode::eval);
  CHECK(breakdown.kl_latent.item() == 0.0);
  CHECK(breakdown.total.item() == breakdown.likelihood.item());
}

TEST_CASE("variational objective composes cross entropy and the latent pull") {
  auto source = SplitModel::build(tiny_config(27));
  auto target = SplitModel::build(tiny_config(28));
  source.freeze();
  auto batch = tiny_batch(1000);

  TransferConfig cfg;
  cfg.method = TransferMethod::vbkt;
  cfg.sigma = 0.2;
  cfg.sample_sigma = 0.2;

  ltk::NoiseDraw noise = ltk::draw_noise(target.latent_shape(2), 31, 0, 0);
  auto breakdown = ltk::vbkt_loss(target, source, batch, cfg, noise);

  // The pull term equals a standalone computation on the same activations:
  // train-mode target means (batch statistics) against eval-mode source means.
  auto mu_t_train = target.forward_pre(batch.x_target, Mode::train);
  auto mu_s = source.forward_pre(batch.x_source, Mode::eval);
  double want_kl = ltk::latent_kl(mu_t_train, mu_s, cfg.sigma).item();
  CHECK(breakdown.kl_latent.item() == doctest::Approx(want_kl).epsilon(1e-9));
  CHECK(breakdown.total.item() ==
        doctest::Approx(breakdown.likelihood.item() + breakdown.kl_latent.item())
            .epsilon(1e-12));
}

TEST_CASE("variational gradients decompose into likelihood and pull pathways") {
  auto source = SplitModel::build(tiny_config(29));
  auto target = SplitModel::build(tiny_config(30));
  source.freeze();
  auto batch = tiny_batch(1100);

  TransferConfig cfg;
  cfg.method = TransferMethod::vbkt;
  ltk::NoiseDraw noise = ltk::draw_noise(target.latent_shape(2), 33, 0, 0);

  // Backward through the full objective.
  auto full = ltk::vbkt_loss(target, source, batch, cfg, noise);
  target.zero_grad();
  full.total.backward();
  std::vector<std::vector<double>> full_grads;
  for (auto& p : target.parameters())
    full_grads.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.numel(), 0.0));

  // Backward through the two terms on separate graphs.
  auto parts = ltk::vbkt_loss(target, source, batch, cfg, noise);
  target.zero_grad();
  parts.likelihood.backward();
  std::vector<std::vector<double>> like_grads;
  for (auto& p : target.parameters())
    like_grads.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.numel(), 0.0));

  auto parts2 = ltk::vbkt_loss(target, source, batch, cfg, noise);
  target.zero_grad();
  parts2.kl_latent.backward();
  std::vector<std::vector<double>> kl_grads;
  for (auto& p : target.parameters())
    kl_grads.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.numel(), 0.0));

  for (std::size_t i = 0; i < full_grads.size(); ++i)
    for (std::size_t j = 0; j < full_grads[i].size(); ++j)
      CHECK(full_grads[i][j] ==
            doctest::Approx(like_grads[i][j] + kl_grads[i][j]).epsilon(1e-9));

  // The frozen source accumulated nothing anywhere.
  for (auto& p : source.parameters()) CHECK_FALSE(p.has_grad());
}

TEST_CASE("one plain gradient step decreases the objective") {
  auto source = SplitModel::build(tiny_config(31));
  auto target = SplitModel::build(tiny_config(32));
  source.freeze();

  ltk::PairedBatch batch;
  batch.x_target = random_input(4, 1200);
  batch.x_source = random_input(4, 1300);
  batch.y = one_hot_rows({0, 1, 2, 0}, 3);

  TransferConfig cfg;
  cfg.method = TransferMethod::vbkt;
  ltk::NoiseDraw noise = ltk::draw_noise(target.latent_shape(4), 35, 0, 0);

  for (double lr : {1e-3, 1e-4}) {
    auto fresh = SplitModel::build(tiny_config(32));
    auto before = ltk::vbkt_loss(fresh, source, batch, cfg, noise);
    fresh.zero_grad();
    before.total.backward();
    for (auto& p : fresh.parameters()) {
      if (!p.has_grad()) continue;
      for (std::size_t i = 0; i < p.values().size(); ++i)
        p.values()[i] -= lr * p.grad()[i];
    }
    auto after = ltk::vbkt_loss(fresh, source, batch, cfg, noise);
    CHECK(after.total.item() < before.total.item());
  }
}

TEST_CASE("teacher input selection follows the config") {
  auto source = SplitModel::build(tiny_config(33));
  source.freeze();
  auto batch = tiny_batch(1400);

  TransferConfig on_source;
  on_source.method = TransferMethod::tsl;
  TransferConfig on_target = on_source;
  on_target.teacher_on_target = true;

  auto target1 = SplitModel::build(tiny_config(34));
  auto target2 = SplitModel::build(tiny_config(34));
  double a = ltk::transfer_loss(target1, &source, batch, on_source, {1, 0, 0}).tsl_term.item();
  double b = ltk::transfer_loss(target2, &source, batch, on_target, {1, 0, 0}).tsl_term.item();
  CHECK(a != b);
}

TEST_CASE("config validation rejects bad values") {
  TransferConfig cfg;
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ltk::Error);
  cfg = TransferConfig{};
  cfg.temperature = -1;
  CHECK_THROWS_AS(cfg.validate(), ltk::Error);
  cfg = TransferConfig{};
  cfg.sample_sigma = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ltk::Error);
  CHECK_NOTHROW(TransferConfig{}.validate());

  CHECK(ltk::parse_transfer_method("vbkt") == TransferMethod::vbkt);
  CHECK(ltk::parse_transfer_method("onehot") == TransferMethod::onehot_finetune);
  CHECK_THROWS_AS(ltk::parse_transfer_method("mystery"), ltk::Error);
  CHECK(std::string(ltk::transfer_method_name(TransferMethod::sp)) == "sp");
}
