#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support/adam_oracle.hpp"
#include "support/gradcheck.hpp"
#include "wrs/analysis.hpp"
#include "wrs/dataset.hpp"
#include "wrs/dynamics.hpp"
#include "wrs/optim.hpp"
#include "wrs/regularize.hpp"
#include "wrs/slices.hpp"
#include "wrs/training.hpp"

using namespace wrs;

namespace {

double sq(std::span<const double> v) { return std::inner_product(v.begin(), v.end(), v.begin(), 0.0); }

OptimizerConfig config(OptimizerKind kind, double lr) {
  OptimizerConfig c;
  c.kind = kind;
  c.lr = lr;
  return c;
}

}  // namespace

TEST_CASE("sgd with an orthogonal gradient grows the squared norm by lr^2 |g|^2") {
  std::vector<double> w{3, 4};
  const std::vector<double> g{4, -3};
  ParamState s;
  sgd_step(w, g, s, config(OptimizerKind::sgd, 0.1), 0.1, 0.0);
  CHECK(sq(w) - 25.0 == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sgd with zero gradient and no decay leaves the parameter alone") {
  std::vector<double> w{1.5, -2.5, 0.25};
  const auto before = w;
  ParamState s;
  for (int i = 0; i < 10; ++i) sgd_step(w, std::vector<double>(3, 0.0), s, config(OptimizerKind::sgdm, 0.1), 0.1, 0.0);
  CHECK(w == before);
}

TEST_CASE("coupled decay follows (1 - lr*lambda)^(2t)") {
  std::vector<double> w{0.3, -1.2, 2.0};
  const double n0 = sq(w), lr = 0.01, lambda = 0.5;
  ParamState s;
  for (int i = 0; i < 100; ++i) sgd_step(w, std::vector<double>(3, 0.0), s, config(OptimizerKind::sgd, lr), lr, lambda);
  CHECK(sq(w) == doctest::Approx(n0 * std::pow(1.0 - lr * lambda, 200)).epsilon(1e-12));
  CHECK(std::abs(sq(w) - n0 * std::exp(-2.0 * lambda * lr * 100)) / sq(w) < 0.01);
}

TEST_CASE("log norm under pure decay is affine with slope 2 log(1 - lr*lambda)") {
  std::vector<double> w{1.0, 2.0, -0.5, 0.1};
  const double n0 = sq(w), lr = 0.1, lambda = 1e-2;
  ParamState s;
  const std::vector<double> zero(4, 0.0);
  for (int t = 1; t <= 10000; ++t) {
    sgd_step(w, zero, s, config(OptimizerKind::sgd, lr), lr, lambda);
    if (t % 1000 == 0) {
      const double slope = (std::log(sq(w)) - std::log(n0)) / t;
      CHECK(slope == doctest::Approx(2.0 * std::log1p(-lr * lambda)).epsilon(1e-9));
      CHECK(std::abs(slope / (-2.0 * lambda * lr) - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("sgdm buffer conventions") {
  const std::vector<double> g{1.0, -2.0};
  SUBCASE("decay inside the buffer") {
    std::vector<double> w{1.0, 1.0};
    ParamState s;
    auto c = config(OptimizerKind::sgdm, 0.1);
    sgd_step(w, g, s, c, 0.1, 0.5);
    sgd_step(w, g, s, c, 0.1, 0.5);
    // buf1 = g + 0.5*w0; w1 = w0 - 0.1*buf1; buf2 = 0.9*buf1 + g + 0.5*w1
    const double b1 = 1.0 + 0.5, w1 = 1.0 - 0.1 * b1, b2 = 0.9 * b1 + 1.0 + 0.5 * w1;
    CHECK(w[0] == doctest::Approx(w1 - 0.1 * b2).epsilon(1e-15));
  }
  SUBCASE("decay outside the buffer") {
    std::vector<double> w{1.0, 1.0};
    ParamState s;
    auto c = config(OptimizerKind::sgdm, 0.1);
    c.decay_inside_momentum = false;
    sgd_step(w, g, s, c, 0.1, 0.5);
    sgd_step(w, g, s, c, 0.1, 0.5);
    const double w1 = 1.0 - 0.1 * (1.0 + 0.5), b2 = 0.9 * 1.0 + 1.0;
    CHECK(w[0] == doctest::Approx(w1 - 0.1 * (b2 + 0.5 * w1)).epsilon(1e-15));
  }
}

TEST_CASE("optimizer refuses parameters without gradients") {
  auto net = Network::build(ArchitectureSpec::bn_mlp({3, 4, 2}), 1);
  Optimizer opt(config(OptimizerKind::sgd, 0.1), net.parameters().size());
  const std::vector<double> decay(net.parameters().size(), 0.0);
  CHECK_THROWS_AS(opt.step(net.parameters(), decay, 0.1), StateError);
  CHECK_THROWS_AS(opt.step(net.parameters(), std::vector<double>(1, 0.0), 0.1), DimensionError);
}

TEST_CASE("adam matches the six-equation oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    wrs::testing::AdamOracle oracle;
    std::vector<double> w{dist(rng)};
    double theta = w[0];
    ParamState s;
    auto c = config(OptimizerKind::adam, 1e-3);
    for (int t = 0; t < 20; ++t) {
      const double g = dist(rng);
      adam_step(w, std::vector<double>{g}, s, c, 1e-3, 0.0);
      theta = oracle.step(theta, g);
      CHECK(std::abs(w[0] - theta) <= 1e-12);
    }
  }
}

TEST_CASE("first adam step is -lr*g/(|g| + eps)") {
  std::vector<double> w{0.0, 0.0, 0.0};
  const std::vector<double> g{0.5, -2.0, 1e-3};
  ParamState s;
  adam_step(w, g, s, config(OptimizerKind::adam, 0.01), 0.01, 0.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(w[i] == doctest::Approx(-0.01 * g[i] / (std::abs(g[i]) + 1e-8)).epsilon(1e-12));
  CHECK(s.steps == 1);
  for (double v : s.v) CHECK(v >= 0.0);
}

TEST_CASE("adam under a constant gradient moves lr per coordinate") {
  std::vector<double> w{0.0, 0.0};
  const std::vector<double> g{0.3, -7.0};
  ParamState s;
  std::vector<double> prev = w;
  for (int t = 0; t < 200; ++t) {
    adam_step(w, g, s, config(OptimizerKind::adam, 0.05), 0.05, 0.0);
    if (t == 199)
      for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(std::abs(w[i] - prev[i]) - 0.05) < 1e-3);
    prev = w;
  }
  CHECK(s.steps == 200);
}

TEST_CASE("adamw decay is decoupled") {
  const std::vector<double> w0{1.0, -2.0, 0.5};
  const std::vector<double> zero(3, 0.0);
  auto run = [&](double b1, double b2, double eps) {
    std::vector<double> w = w0;
    ParamState s;
    OptimizerConfig c = config(OptimizerKind::adamw, 0.01);
    c.momentum = b1;
    c.beta2 = b2;
    c.epsilon = eps;
    for (int t = 0; t < 50; ++t) adam_step(w, zero, s, c, 0.01, 0.5);
    return w;
  };
  const auto a = run(0.9, 0.999, 1e-8);
  CHECK(a == run(0.5, 0.9, 1e-3));
  CHECK(a == run(0.0, 0.0, 1.0));
  CHECK(std::sqrt(sq(a)) == doctest::Approx(std::sqrt(sq(w0)) * std::pow(1.0 - 0.005, 50)).epsilon(1e-12));

  // Coupled decay goes through the moments instead.
  std::vector<double> w = w0;
  ParamState s;
  adam_step(w, zero, s, config(OptimizerKind::adam, 0.01), 0.01, 0.5);
  CHECK(w[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam rejects a non-positive epsilon") {
  auto c = config(OptimizerKind::adam, 0.01);
  c.epsilon = 0.0;
  std::vector<double> w{1.0};
  ParamState s;
  CHECK_THROWS_AS(adam_step(w, std::vector<double>{1.0}, s, c, 0.01, 0.0), ConfigError);
  CHECK_THROWS_AS(Optimizer(c, 1), ConfigError);
}

TEST_CASE("tangent projection") {
  const std::vector<double> w{3.0, 4.0};
  SUBCASE("parallel direction vanishes") {
    const auto p = project_tangent(w, std::vector<double>{6.0, 8.0}, 1);
    CHECK(std::abs(p[0]) < 1e-15);
    CHECK(std::abs(p[1]) < 1e-15);
  }
  SUBCASE("orthogonal direction is kept") {
    const auto p = project_tangent(w, std::vector<double>{4.0, -3.0}, 1);
    CHECK(p == std::vector<double>{4.0, -3.0});
  }
  SUBCASE("random directions, several slices") {
    std::mt19937_64 rng(32);
    for (int t = 0; t < 100; ++t) {
      const auto wv = wrs::testing::uniform_values(24, rng);
      const auto pv = wrs::testing::uniform_values(24, rng);
      const auto out = project_tangent(wv, pv, 4);
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::abs(slices::dot(wv, out, 4, j)) <= 1e-12 * slices::norm(wv, 4, j) * slices::norm(pv, 4, j));
      }
    }
  }
  SUBCASE("zero slices are left unprojected") {
    const auto p = project_tangent(std::vector<double>{0.0, 1.0, 0.0, 1.0}, std::vector<double>{1.0, 1.0, 1.0, 1.0}, 2);
    CHECK(p[0] == 1.0);
    CHECK(p[2] == 1.0);
    CHECK(p[1] == 0.0);
  }
}

TEST_CASE("adamp keeps scale-invariant slices on their sphere direction") {
  std::vector<double> w{1.0, 1.0};
  ParamState s;
  auto c = config(OptimizerKind::adamp, 0.01);
  // The Adam direction (1,1)/(1+eps) is parallel to w, so nothing is left.
  adamp_step(w, std::vector<double>{2.0, 2.0}, s, c, 0.01, 0.0, true, 1);
  CHECK(w == std::vector<double>{1.0, 1.0});

  // Not scale invariant: identical to adamw.
  std::vector<double> a{1.0, 2.0}, b{1.0, 2.0};
  ParamState sa, sb;
  adamp_step(a, std::vector<double>{0.3, -0.1}, sa, c, 0.01, 0.1, false, 1);
  adam_step(b, std::vector<double>{0.3, -0.1}, sb, config(OptimizerKind::adamw, 0.01), 0.01, 0.1);
  CHECK(a == b);

  CHECK(check_adamp_tangency(50, 4).passed);
}

TEST_CASE("effective gradient norm") {
  CHECK(effective_gradient_norm(std::vector<double>{0.0, 4.0}, std::vector<double>{2.0, 0.0}) == 0.5);
  CHECK_THROWS_AS(effective_gradient_norm(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 0.0}), NumericError);
  std::vector<double> w{3.0, 4.0};
  for (auto& v : w) v /= 5.0;
  CHECK(effective_gradient_norm(w, std::vector<double>{0.3, 0.4}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("effective ratio falls while the weight norm grows under plain SGD") {
  const auto data = make_synthetic({.classes = 4, .dim = 16, .samples = 400, .seed = 5, .separation = 2.0});
  auto net = Network::build(ArchitectureSpec::bn_mlp({16, 32, 4}), 6);
  Optimizer opt(config(OptimizerKind::sgd, 0.5), net.parameters().size());
  const std::vector<double> decay(net.parameters().size(), 0.0);
  std::mt19937_64 rng(7);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> norms, ratios;
  for (int step = 0; step < 50; ++step) {
    if (step % 10 == 0) std::shuffle(idx.begin(), idx.end(), rng);
    const std::span<const std::size_t> b(idx.data() + (step % 10) * 40, 40);
    loss_and_gradients(net, data.batch(b), data.batch_labels(b));
    opt.step(net.parameters(), decay, 0.5);
    const auto m = record_step_metrics(net, opt);
    norms.push_back(m[0].weight_norm);
    ratios.push_back(m[0].effective_ratio);
  }
  for (std::size_t i = 1; i < norms.size(); ++i) CHECK(norms[i] >= norms[i - 1]);
  CHECK(spearman(norms, ratios) < 0.0);
}

TEST_CASE("discrete norm law and monotone growth on a toy run") { CHECK(check_norm_law(100, 8).passed); }

TEST_CASE("learning-rate schedule") {
  LrSchedule s{.initial = 0.1, .decay_epochs = {30, 60}, .decay_factor = 0.1};
  CHECK(s.at(0) == 0.1);
  CHECK(s.at(29) == 0.1);
  CHECK(s.at(30) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(s.at(59) == s.at(30));
  CHECK(s.at(60) == doctest::Approx(0.001).epsilon(1e-15));
  for (std::size_t e = 1; e < 100; ++e) CHECK(s.at(e) <= s.at(e - 1));
  CHECK_NOTHROW(s.validate());
  s.decay_epochs = {60, 30};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.decay_epochs = {};
  s.decay_factor = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("optimizer names") {
  for (auto k : {OptimizerKind::sgd, OptimizerKind::sgdm, OptimizerKind::adam, OptimizerKind::adamw, OptimizerKind::adamp})
    CHECK(parse_optimizer_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_optimizer_kind("lamb"), ConfigError);
}
