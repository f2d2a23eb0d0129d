#include <cmath>
#include <random>

#include "doctest.h"
#include "support/gradcheck.hpp"
#include "wrs/ops.hpp"

using namespace wrs;
using wrs::testing::gradcheck;
using wrs::testing::random_tensor;

namespace {

// Projects a tensor-valued op onto a scalar with a fixed random direction.
Tensor probe(const Tensor& out, const Tensor& direction) { return dot(out, direction); }

}  // namespace

TEST_CASE("tensor shape and data must agree") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), DimensionError);
  Tensor t({2, 3}, std::vector<double>(6, 1.5));
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK_FALSE(t.has_grad());
  CHECK_THROWS_AS(t.grad(), StateError);
  CHECK_THROWS_AS(t.item(), ValidationError);
}

TEST_CASE("matmul") {
  SUBCASE("identity") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {1, 2, 3, 4});
    const auto out = matmul(eye, m);
    CHECK(std::vector<double>(out.data().begin(), out.data().end()) == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("row times column") {
    const auto out = matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
    CHECK(out.shape() == Shape{1, 1});
    CHECK(out[0] == 11.0);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }
  SUBCASE("gradients") {
    std::mt19937_64 rng(1);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 2}, rng);
    const auto r = random_tensor({3, 2}, rng, false);
    CHECK(gradcheck([&] { return probe(matmul(a, b), r); }, {a, b}) < 1e-6);
  }
}

TEST_CASE("conv2d") {
  SUBCASE("ones") {
    const auto out = conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({3, 3, 1, 1}, 1.0), 1, 0);
    CHECK(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out[0] == 9.0);
  }
  SUBCASE("impulse reproduces the kernel") {
    std::mt19937_64 rng(2);
    const std::size_t k = 3;
    auto kernel = random_tensor({k, k, 1, 1}, rng, false);
    auto input = Tensor::zeros({1, 1, 1, 1});
    input.mutable_data()[0] = 1.0;
    const auto out = conv2d(input, kernel, 1, k - 1);
    REQUIRE(out.shape() == Shape{1, 1, k, k});
    // Cross-correlation sees the impulse through a reversed window.
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) CHECK(out[i * k + j] == kernel[(k - 1 - i) * k + (k - 1 - j)]);
  }
  SUBCASE("output extent") {
    const auto out = conv2d(Tensor::zeros({2, 3, 8, 8}), Tensor::zeros({3, 3, 3, 5}), 2, 1);
    CHECK(out.shape() == Shape{2, 5, 4, 4});
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({3, 3, 1, 1}), 1, 0), DimensionError);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({3, 3, 1, 1}), 1, 0), DimensionError);
  }
  SUBCASE("gradients") {
    std::mt19937_64 rng(3);
    auto x = random_tensor({2, 3, 8, 8}, rng);
    auto w = random_tensor({3, 3, 3, 4}, rng);
    const auto r = random_tensor({2, 4, 8, 8}, rng, false);
    CHECK(gradcheck([&] { return probe(conv2d(x, w, 1, 1), r); }, {x, w}) < 1e-5);
    const auto r2 = random_tensor({2, 4, 3, 3}, rng, false);
    CHECK(gradcheck([&] { return probe(conv2d(x, w, 2, 0), r2); }, {x, w}) < 1e-5);
  }
}

TEST_CASE("relu") {
  const auto out = relu(Tensor({3}, {-1, 0, 2}));
  CHECK(std::vector<double>(out.data().begin(), out.data().end()) == std::vector<double>{0, 0, 2});

  Tensor neg({4}, {-1, -2, -3, -0.5}, true);
  backward(sum(relu(neg)));
  for (double g : neg.grad()) CHECK(g == 0.0);

  Tensor zero({1}, {0.0}, true);
  backward(sum(relu(zero)));
  CHECK(zero.grad()[0] == 0.0);

  std::mt19937_64 rng(4);
  auto x = random_tensor({5, 6}, rng, true, 1e-3);
  const auto r = random_tensor({5, 6}, rng, false);
  CHECK(gradcheck([&] { return probe(relu(x), r); }, {x}) < 1e-6);
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<std::size_t> labels{3};
  CHECK(softmax_xent(Tensor::zeros({1, 10}), labels).item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));

  Tensor big({1, 3}, {0.0, 1000.0, 0.0});
  const std::vector<std::size_t> hit{1};
  const double loss = softmax_xent(big, hit).item();
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-12));

  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(softmax_xent(Tensor::zeros({1, 3}), bad), ValidationError);

  std::mt19937_64 rng(5);
  auto logits = random_tensor({4, 5}, rng);
  const std::vector<std::size_t> y{0, 4, 2, 2};
  CHECK(gradcheck([&] { return softmax_xent(logits, y); }, {logits}) < 1e-6);

  // (softmax - onehot) / B
  Tensor flat({2, 2}, {0, 0, 0, 0}, true);
  const std::vector<std::size_t> y2{0, 1};
  backward(softmax_xent(flat, y2));
  CHECK(flat.grad()[0] == doctest::Approx(-0.25));
  CHECK(flat.grad()[1] == doctest::Approx(0.25));
}

TEST_CASE("backward") {
  SUBCASE("sum") {
    Tensor w({3}, {1, 2, 3}, true);
    backward(sum(w));
    for (double g : w.grad()) CHECK(g == 1.0);
  }
  SUBCASE("quadratic") {
    Tensor w({2}, {1, 2}, true);
    backward(dot(w, w));
    CHECK(w.grad()[0] == 2.0);
    CHECK(w.grad()[1] == 4.0);
  }
  SUBCASE("non-scalar loss") { CHECK_THROWS_AS(backward(Tensor::zeros({2}, true)), ValidationError); }
  SUBCASE("leaves accumulate across calls, interior nodes do not") {
    Tensor w({2}, {1, 2}, true);
    const auto y = scale(w, 3.0);
    backward(sum(y));
    backward(sum(y));
    CHECK(w.grad()[0] == 6.0);
  }
  SUBCASE("no-grad guard records nothing") {
    Tensor w({2}, {1, 2}, true);
    Tensor y;
    {
      NoGradGuard guard;
      y = scale(w, 2.0);
    }
    CHECK_FALSE(y.requires_grad());
    CHECK(y.is_leaf());
  }
  SUBCASE("only leaves are writable") {
    Tensor w({2}, {1, 2}, true);
    auto y = scale(w, 2.0);
    CHECK_THROWS_AS(y.mutable_data(), StateError);
  }
}

TEST_CASE("shared subexpressions sum their path gradients") {
  std::mt19937_64 rng(6);
  auto a = random_tensor({3, 3}, rng);
  auto b = random_tensor({3, 3}, rng);

  // h is used twice; the duplicate graph recomputes it for each use.
  const auto h = relu(matmul(a, b));
  backward(add(sum(mul(h, h)), dot(h, a)));
  const std::vector<double> shared(a.grad().begin(), a.grad().end());

  a.clear_grad();
  b.clear_grad();
  const auto h1 = relu(matmul(a, b));
  const auto h2 = relu(matmul(a, b));
  const auto h3 = relu(matmul(a, b));
  backward(add(sum(mul(h1, h2)), dot(h3, a)));
  for (std::size_t i = 0; i < shared.size(); ++i) CHECK(shared[i] == doctest::Approx(a.grad()[i]).epsilon(1e-14));
}

TEST_CASE("gradient accumulation does not depend on term order") {
  std::mt19937_64 rng(7);
  auto w = random_tensor({20}, rng);
  std::vector<Tensor> terms;
  for (int i = 0; i < 300; ++i) terms.push_back(scale(mul(w, w), 0.01 * (i % 7 + 1)));

  auto total = [&](bool reversed) {
    Tensor acc = terms[reversed ? terms.size() - 1 : 0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[reversed ? terms.size() - 1 - i : i]);
    w.clear_grad();
    backward(sum(acc));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  const auto fwd = total(false);
  const auto rev = total(true);
  for (std::size_t i = 0; i < fwd.size(); ++i) CHECK(std::abs(fwd[i] - rev[i]) <= 1e-12);
}

TEST_CASE("elementwise and reshaping ops") {
  std::mt19937_64 rng(8);
  auto a = random_tensor({2, 3, 2, 2}, rng);
  auto b = random_tensor({2, 3, 2, 2}, rng);
  const auto r = random_tensor({2, 12}, rng, false);
  CHECK(gradcheck([&] { return probe(flatten(add(mul(a, b), scale(a, 0.5))), r); }, {a, b}) < 1e-6);
  CHECK_THROWS_AS(reshape(a, {5}), DimensionError);
  CHECK_THROWS_AS(add(a, Tensor::zeros({3})), DimensionError);

  const auto r2 = random_tensor({2, 3, 1, 1}, rng, false);
  CHECK(gradcheck([&] { return probe(maxpool2d(a, 2), r2); }, {a}) < 1e-6);
}

TEST_CASE("maxpool picks the window maximum") {
  Tensor x({1, 1, 2, 4}, {1, 5, 2, 0, 3, 4, 7, 1});
  const auto out = maxpool2d(x, 2);
  REQUIRE(out.shape() == Shape{1, 1, 1, 2});
  CHECK(out[0] == 5.0);
  CHECK(out[1] == 7.0);
}
