// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ltk/gradcheck.hpp"
#include "ltk/layers.hpp"
#include "ltk/rng.hpp"

using ltk::Tensor;

namespace {

// Direct sliding-window cross-correlation, the oracle for the GEMM path.
std::vector<double> conv_reference(const std::vector<double>& x, int b, int c, int h,
                                   int w, const std::vector<double>& k, int f,
                                   int kernel, const std::vector<double>& bias,
                                   int stride, int padding, int oh, int ow) {
  std::vector<double> out(static_cast<std::size_t>(b) * f * oh * ow, 0.0);
  for (int bi = 0; bi < b; ++bi)
    for (int fi = 0; fi < f; ++fi)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias[fi];
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < kernel; ++ky)
              for (int kx = 0; kx < kernel; ++kx) {
                int iy = oy * stride - padding + ky;
                int ix = ox * stride - padding + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += x[((bi * c + ci) * h + iy) * w + ix] *
                       k[(fi * c + ci) * kernel * kernel + ky * kernel + kx];
              }
          out[((bi * f + fi) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("dense identity and zero-weight cases") {
  auto x = Tensor::from_values({1, 2}, {1, 2});
  auto eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
  auto zero_b = Tensor::zeros({2});
  auto y = ltk::dense_forward(x, eye, zero_b);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);

  auto zeros_w = Tensor::zeros({2, 2});
  auto bias = Tensor::from_values({2}, {3, 4});
  auto y2 = ltk::dense_forward(x, zeros_w, bias);
  CHECK(y2[0] == 3.0);
  CHECK(y2[1] == 4.0);

  auto w = Tensor::from_values({2, 2}, {1, 1, 1, -1});
  auto y3 = ltk::dense_forward(x, w, zero_b);
  CHECK(y3[0] == 3.0);
  CHECK(y3[1] == -1.0);
}

TEST_CASE("dense shape errors name the offending axes") {
  auto x = Tensor::zeros({1, 3});
  auto w = Tensor::zeros({2, 2});
  auto b = Tensor::zeros({2});
  try {
    ltk::dense_forward(x, w, b);
    FAIL("expected throw");
  } catch (const ltk::Error& e) {
    CHECK(e.category() == ltk::ErrorCategory::dimension);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  CHECK_THROWS_AS(ltk::dense_forward(Tensor::zeros({1, 2}), w, Tensor::zeros({5})),
                  ltk::Error);
}

TEST_CASE("dense gradients match finite differences") {
  ltk::Rng rng(17);
  auto x = Tensor::zeros({3, 4}, true);
  auto w = Tensor::zeros({4, 2}, true);
  auto b = Tensor::zeros({2}, true);
  for (auto& v : x.values()) v = rng.normal();
  for (auto& v : w.values()) v = rng.normal();
  for (auto& v : b.values()) v = rng.normal();
  auto build = [&]() {
    auto y = ltk::dense_forward(x, w, b);
    return ltk::sum(ltk::mul(y, y));
  };
  auto report = ltk::check_gradients({{"x", x}, {"w", w}, {"b", b}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("conv2d identity and zero kernels") {
  ltk::Rng rng(3);
  auto x = Tensor::zeros({1, 1, 3, 4});
  for (auto& v : x.values()) v = rng.uniform(-1, 1);

  auto k1 = Tensor::from_values({1, 1}, {1.0});  // 1x1 kernel, weight 1
  auto b0 = Tensor::zeros({1});
  auto y = ltk::conv2d_forward(x, k1, b0, 1, 0);
  REQUIRE(y.shape() == x.shape());
  for (int i = 0; i < 12; ++i) CHECK(y[i] == x[i]);

  auto kz = Tensor::zeros({2, 9});
  auto bz = Tensor::zeros({2});
  auto y2 = ltk::conv2d_forward(x, kz, bz, 1, 1);
  for (double v : y2.values()) CHECK(v == 0.0);
}

TEST_CASE("conv2d 2x2 ones kernel on 1..9") {
  auto x = Tensor::from_values({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto k = Tensor::from_values({1, 4}, {1, 1, 1, 1});
  auto b = Tensor::zeros({1});
  auto y = ltk::conv2d_forward(x, k, b, 1, 0);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(y[0] == 12.0);
  CHECK(y[1] == 16.0);
  CHECK(y[2] == 24.0);
  CHECK(y[3] == 28.0);
}

TEST_CASE("conv2d matches the sliding-window reference on random configs") {
  ltk::Rng rng(41);
  struct Case { int b, c, h, w, f, kernel, stride, padding; };
  for (const Case& cs : {Case{2, 3, 5, 7, 4, 3, 1, 1}, Case{1, 2, 9, 7, 3, 3, 2, 0},
                         Case{3, 1, 4, 4, 2, 2, 2, 1}}) {
    auto x = Tensor::zeros({cs.b, cs.c, cs.h, cs.w});
    auto k = Tensor::zeros({cs.f, cs.c * cs.kernel * cs.kernel});
    auto bias = Tensor::zeros({cs.f});
    for (auto& v : x.values()) v = rng.normal();
    for (auto& v : k.values()) v = rng.normal();
    for (auto& v : bias.values()) v = rng.normal();

    int oh = ltk::conv_out_extent(cs.h, cs.kernel, cs.stride, cs.padding, "h");
    int ow = ltk::conv_out_extent(cs.w, cs.kernel, cs.stride, cs.padding, "w");
    auto want = conv_reference(x.values(), cs.b, cs.c, cs.h, cs.w, k.values(), cs.f,
                               cs.kernel, bias.values(), cs.stride, cs.padding, oh, ow);
    auto y = ltk::conv2d_forward(x, k, bias, cs.stride, cs.padding);
    REQUIRE(y.numel() == static_cast<std::int64_t>(want.size()));
    for (std::size_t i = 0; i < want.size(); ++i)
      CHECK(y[static_cast<std::int64_t>(i)] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d rejects non-integral output sizes") {
  auto x = Tensor::zeros({1, 1, 5, 5});
  auto k = Tensor::from_values({1, 4}, {1, 1, 1, 1});
  auto b = Tensor::zeros({1});
  try {
    ltk::conv2d_forward(x, k, b, 2, 0);
    FAIL("expected throw");
  } catch (const ltk::Error& e) {
    CHECK(e.category() == ltk::ErrorCategory::config);
  }
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  auto x = Tensor::zeros({1, 1, 2, 2});
  auto k = Tensor::zeros({1, 25});
  auto b = Tensor::zeros({1});
  CHECK_THROWS_AS(ltk::conv2d_forward(x, k, b, 1, 0), ltk::Error);
}

TEST_CASE("conv2d gradients match finite differences") {
  ltk::Rng rng(19);
  auto x = Tensor::zeros({2, 2, 4, 5}, true);
  auto k = Tensor::zeros({3, 2 * 9}, true);
  auto b = Tensor::zeros({3}, true);
  for (auto& v : x.values()) v = rng.normal();
  for (auto& v : k.values()) v = rng.normal();
  for (auto& v : b.values()) v = rng.normal();
  auto build = [&]() {
    auto y = ltk::conv2d_forward(x, k, b, 1, 1);
    return ltk::sum(ltk::mul(y, y));
  };
  auto report = ltk::check_gradients({{"x", x}, {"k", k}, {"b", b}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("batchnorm normalizes the {1,3} batch") {
  auto x = Tensor::from_values({2, 1}, {1, 3});
  auto gamma = Tensor::full({1}, 1.0);
  auto beta = Tensor::zeros({1});
  auto rm = Tensor::zeros({1});
  auto rv = Tensor::full({1}, 1.0);
  auto y = ltk::batchnorm_forward(x, gamma, beta, rm, rv, ltk::Mode::train, 1e-5, 0.1);
  CHECK(std::abs(y[0] - (-1.0)) < 1e-4);
  CHECK(std::abs(y[1] - 1.0) < 1e-4);

  // momentum 0.1 folds the batch stats into the running estimates
  CHECK(rm[0] == doctest::Approx(0.1 * 2.0));
  CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 2.0));  // unbiased var of {1,3} is 2
}

TEST_CASE("batchnorm gamma=0 beta=5 pins the output") {
  auto x = Tensor::from_values({2, 1, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto gamma = Tensor::zeros({1});
  auto beta = Tensor::full({1}, 5.0);
  auto rm = Tensor::zeros({1});
  auto rv = Tensor::full({1}, 1.0);
  auto y = ltk::batchnorm_forward(x, gamma, beta, rm, rv, ltk::Mode::train, 1e-5, 0.1);
  for (double v : y.values()) CHECK(v == 5.0);
}

TEST_CASE("batchnorm eval with identity stats is a near-identity") {
  ltk::Rng rng(5);
  auto x = Tensor::zeros({3, 2, 2, 2});
  for (auto& v : x.values()) v = rng.normal();
  auto gamma = Tensor::full({2}, 1.0);
  auto beta = Tensor::zeros({2});
  auto rm = Tensor::zeros({2});
  auto rv = Tensor::full({2}, 1.0);
  auto y = ltk::batchnorm_forward(x, gamma, beta, rm, rv, ltk::Mode::eval, 1e-5, 0.1);
  for (int i = 0; i < 24; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-5));
}

TEST_CASE("batchnorm train mode requires a real batch") {
  auto x = Tensor::zeros({1, 2});
  auto gamma = Tensor::full({2}, 1.0);
  auto beta = Tensor::zeros({2});
  auto rm = Tensor::zeros({2});
  auto rv = Tensor::full({2}, 1.0);
  try {
    ltk::batchnorm_forward(x, gamma, beta, rm, rv, ltk::Mode::train, 1e-5, 0.1);
    FAIL("expected throw");
  } catch (const ltk::Error& e) {
    CHECK(e.category() == ltk::ErrorCategory::dimension);
  }
  CHECK_NOTHROW(
      ltk::batchnorm_forward(x, gamma, beta, rm, rv, ltk::Mode::eval, 1e-5, 0.1));
}

TEST_CASE("batchnorm train output is standardized per channel") {
  ltk::Rng rng(23);
  const int B = 8, C = 3, S = 4;
  auto x = Tensor::zeros({B, C, 2, 2});
  for (auto& v : x.values()) v = rng.uniform(-3, 7);
  auto gamma = Tensor::full({C}, 1.0);
  auto beta = Tensor::zeros({C});
  auto rm = Tensor::zeros({C});
  auto rv = Tensor::full({C}, 1.0);
  auto y = ltk::batchnorm_forward(x, gamma, beta, rm, rv, ltk::Mode::train, 1e-5, 0.1);
  for (int c = 0; c < C; ++c) {
    double mean = 0.0, var = 0.0;
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < S; ++s) mean += y[(b * C + c) * S + s];
    mean /= B * S;
    for (int b = 0; b < B; ++b)
      for (int s = 0; s < S; ++s) {
        double d = y[(b * C + c) * S + s] - mean;
        var += d * d;
      }
    var /= B * S;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("batchnorm train-mode gradients match finite differences") {
  ltk::Rng rng(29);
  auto x = Tensor::zeros({4, 2, 3, 3}, true);
  auto gamma = Tensor::zeros({2}, true);
  auto beta = Tensor::zeros({2}, true);
  for (auto& v : x.values()) v = rng.normal();
  for (auto& v : gamma.values()) v = rng.uniform(0.5, 1.5);
  for (auto& v : beta.values()) v = rng.normal();
  auto rm = Tensor::zeros({2});
  auto rv = Tensor::full({2}, 1.0);
  auto target = Tensor::zeros({4, 2, 3, 3});
  for (auto& v : target.values()) v = rng.normal();

  auto build = [&]() {
    auto y = ltk::batchnorm_forward(x, gamma, beta, rm, rv, ltk::Mode::train, 1e-5, 0.1);
    auto d = ltk::sub(y, target);
    return ltk::sum(ltk::mul(d, d));
  };
  auto report =
      ltk::check_gradients({{"x", x}, {"gamma", gamma}, {"beta", beta}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("batchnorm eval-mode gradients match finite differences") {
  ltk::Rng rng(31);
  auto x = Tensor::zeros({3, 2}, true);
  auto gamma = Tensor::zeros({2}, true);
  auto beta = Tensor::zeros({2}, true);
  for (auto& v : x.values()) v = rng.normal();
  for (auto& v : gamma.values()) v = rng.uniform(0.5, 1.5);
  for (auto& v : beta.values()) v = rng.normal();
  auto rm = Tensor::from_values({2}, {0.3, -0.2});
  auto rv = Tensor::from_values({2}, {1.7, 0.6});
  auto build = [&]() {
    auto y = ltk::batchnorm_forward(x, gamma, beta, rm, rv, ltk::Mode::eval, 1e-5, 0.1);
    return ltk::sum(ltk::mul(y, y));
  };
  auto report =
      ltk::check_gradients({{"x", x}, {"gamma", gamma}, {"beta", beta}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("maxpool picks window maxima and routes gradients to them") {
  auto x = Tensor::from_values({1, 1, 2, 4}, {1, 5, 2, 2, 3, 0, 4, 4}, true);
  auto y = ltk::maxpool_forward(x, 2, 2);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 1, 2});
  CHECK(y[0] == 5.0);
  CHECK(y[1] == 4.0);

  ltk::sum(y).backward();
  // 5 sits at flat index 1; the tied 4s resolve to the first in scan order,
  // flat index 6.
  std::vector<double> want = {0, 1, 0, 0, 0, 0, 1, 0};
  for (int i = 0; i < 8; ++i) CHECK(x.grad()[i] == want[i]);
}

TEST_CASE("maxpool gradient matches finite differences away from ties") {
  ltk::Rng rng(37);
  auto x = Tensor::zeros({2, 2, 4, 4}, true);
  for (auto& v : x.values()) v = rng.uniform(0, 1);
  auto build = [&]() {
    auto y = ltk::maxpool_forward(x, 2, 2);
    return ltk::sum(ltk::mul(y, y));
  };
  auto report = ltk::check_gradients({{"x", x}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("avgpool averages windows and spreads gradient evenly") {
  auto x = Tensor::from_values({1, 1, 2, 2}, {1, 3, 5, 7}, true);
  auto y = ltk::avgpool_forward(x, 2, 2);
  CHECK(y.item() == doctest::Approx(4.0));
  y.backward();
  for (double g : x.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("avgpool gradient matches finite differences") {
  ltk::Rng rng(43);
  auto x = Tensor::zeros({2, 3, 4, 6}, true);
  for (auto& v : x.values()) v = rng.normal();
  auto build = [&]() {
    auto y = ltk::avgpool_forward(x, 2, 2);
    return ltk::sum(ltk::mul(y, y));
  };
  auto report = ltk::check_gradients({{"x", x}}, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("pool rejects non-integral geometry") {
  auto x = Tensor::zeros({1, 1, 5, 4});
  CHECK_THROWS_AS(ltk::maxpool_forward(x, 2, 2), ltk::Error);
  CHECK_THROWS_AS(ltk::avgpool_forward(x, 2, 2), ltk::Error);
}

TEST_CASE("flatten folds all non-batch axes") {
  auto x = Tensor::zeros({2, 3, 4, 5});
  auto y = ltk::flatten_forward(x);
  CHECK(y.shape() == std::vector<int>{2, 60});
}

TEST_CASE("layer spec validation rejects bad hyperparameters") {
  CHECK_THROWS_AS(ltk::LayerSpec::dense(0, 5), ltk::Error);
  CHECK_THROWS_AS(ltk::LayerSpec::conv2d(1, 4, -3), ltk::Error);
  CHECK_THROWS_AS(ltk::LayerSpec::batchnorm(4, -1.0), ltk::Error);
  CHECK_THROWS_AS(ltk::LayerSpec::maxpool(2, 0), ltk::Error);
  CHECK_NOTHROW(ltk::LayerSpec::conv2d(1, 4, 3, 1, 1));
}

TEST_CASE("layer init is seeded and bounded") {
  ltk::Layer a(ltk::LayerSpec::dense(16, 8));
  ltk::Layer b(ltk::LayerSpec::dense(16, 8));
  a.init_params(42);
  b.init_params(42);
  auto pa = a.parameters();
  auto pb = b.parameters();
  REQUIRE(pa.size() == 2);
  for (std::size_t i = 0; i < pa[0].values().size(); ++i)
    CHECK(pa[0].values()[i] == pb[0].values()[i]);

  double limit = std::sqrt(6.0 / 16.0);
  for (double v : pa[0].values()) CHECK(std::abs(v) <= limit);
  for (double v : pa[1].values()) CHECK(v == 0.0);

  ltk::Layer c(ltk::LayerSpec::dense(16, 8));
  c.init_params(43);
  bool differs = false;
  for (std::size_t i = 0; i < pa[0].values().size(); ++i)
    if (c.parameters()[0].values()[i] != pa[0].values()[i]) differs = true;
  CHECK(differs);
}

TEST_CASE("per-layer grad check through a conv block") {
  ltk::Rng rng(53);
  ltk::Layer conv(ltk::LayerSpec::conv2d(1, 2, 3, 1, 1));
  ltk::Layer bn(ltk::LayerSpec::batchnorm(2));
  conv.init_params(7);
  auto x = Tensor::zeros({2, 1, 4, 4}, true);
  for (auto& v : x.values()) v = rng.normal();

  std::vector<std::pair<std::string, Tensor>> params{{"x", x}};
  for (auto& p : conv.parameters()) params.emplace_back("conv", p);
  for (auto& p : bn.parameters()) params.emplace_back("bn", p);

  auto build = [&]() {
    auto h = conv.forward(x, ltk::Mode::train);
    h = bn.forward(h, ltk::Mode::train);
    h = ltk::relu(h);
    h = ltk::maxpool_forward(h, 2, 2);
    return ltk::sum(ltk::mul(h, h));
  };
  auto report = ltk::check_gradients(params, build, 1e-4);
  CHECK_MESSAGE(report.passed, report.to_string());
}

TEST_CASE("gradient correctness holds across 100 random seeds") {
  // One layer kind per seed bucket keeps the sweep fast while still covering
  // every kind many times.
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ltk::Rng rng(seed * 131 + 7);
    int kind = static_cast<int>(seed % 4);
    std::function<Tensor()> build;
    std::vector<std::pair<std::string, Tensor>> params;
    switch (kind) {
      case 0: {
        auto x = Tensor::zeros({2, 3}, true);
        auto w = Tensor::zeros({3, 2}, true);
        auto b = Tensor::zeros({2}, true);
        for (auto& v : x.values()) v = rng.normal();
        for (auto& v : w.values()) v = rng.normal();
        for (auto& v : b.values()) v = rng.normal();
        params = {{"x", x}, {"w", w}, {"b", b}};
        build = [x, w, b]() {
          auto y = ltk::dense_forward(x, w, b);
          return ltk::sum(ltk::mul(y, y));
        };
        break;
      }
      case 1: {
        auto x = Tensor::zeros({1, 1, 4, 4}, true);
        auto k = Tensor::zeros({2, 4}, true);
        auto b = Tensor::zeros({2}, true);
        for (auto& v : x.values()) v = rng.normal();
        for (auto& v : k.values()) v = rng.normal();
        for (auto& v : b.values()) v = rng.normal();
        params = {{"x", x}, {"k", k}, {"b", b}};
        build = [x, k, b]() {
          auto y = ltk::conv2d_forward(x, k, b, 2, 0);
          return ltk::sum(ltk::mul(y, y));
        };
        break;
      }
      case 2: {
        auto x = Tensor::zeros({3, 2}, true);
        auto g = Tensor::zeros({2}, true);
        auto be = Tensor::zeros({2}, true);
        for (auto& v : x.values()) v = rng.normal();
        for (auto& v : g.values()) v = rng.uniform(0.5, 1.5);
        for (auto& v : be.values()) v = rng.normal();
        auto rm = Tensor::zeros({2});
        auto rv = Tensor::full({2}, 1.0);
        params = {{"x", x}, {"gamma", g}, {"beta", be}};
        build = [x, g, be, rm, rv]() mutable {
          auto y = ltk::batchnorm_forward(x, g, be, rm, rv, ltk::Mode::train, 1e-5, 0.1);
          return ltk::sum(ltk::mul(y, y));
        };
        break;
      }
      default: {
        auto x = Tensor::zeros({1, 2, 4, 4}, true);
        for (auto& v : x.values()) v = rng.normal();
        params = {{"x", x}};
        build = [x]() {
          auto y = ltk::avgpool_forward(ltk::relu(x), 2, 2);
          return ltk::sum(ltk::mul(y, y));
        };
        break;
      }
    }
    auto report = ltk::check_gradients(params, build, 1e-4);
    CHECK_MESSAGE(report.passed, "seed ", seed, ": ", report.to_string());
  }
}
