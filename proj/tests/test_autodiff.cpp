#include "doctest.h"

#include "mot3d/autodiff.hpp"
#include "mot3d/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

using namespace mot3d::nn;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// Reduces any tensor to a scalar through a fixed random projection so every
// output element receives a distinct upstream gradient.
Tensor project(const Tensor& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(y.size());
  const Tensor w = Tensor::constant({1, n}, random_values(static_cast<std::size_t>(n), rng));
  return sum(affine(reshape(y, {n}), w, Tensor::zeros({1})));
}

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

// Central finite differences against the tape gradient for every leaf entry.
void check_gradients(const Fn& f, const std::vector<Shape>& shapes, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::vector<std::vector<double>> base;
  for (const auto& s : shapes) base.push_back(random_values(shape_size(s), rng, lo, hi));
  const std::uint64_t proj_seed = rng();

  auto evaluate = [&](const std::vector<std::vector<double>>& vals, bool grad) {
    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < shapes.size(); ++i) leaves.push_back(Tensor::leaf(shapes[i], vals[i], grad));
    Tensor out = project(f(leaves), proj_seed);
    return std::make_pair(out, leaves);
  };

  auto [out, leaves] = evaluate(base, true);
  out.backward();

  const double h = 1e-5;
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    const auto g = leaves[li].grad();
    REQUIRE(g.size() == base[li].size());
    for (std::size_t k = 0; k < base[li].size(); ++k) {
      auto plus = base;
      auto minus = base;
      plus[li][k] += h;
      minus[li][k] -= h;
      const double fd = (evaluate(plus, false).first.item() - evaluate(minus, false).first.item()) / (2.0 * h);
      const double scale_ref = std::max(1.0, std::max(std::abs(fd), std::abs(g[k])));
      CHECK(std::abs(fd - g[k]) / scale_ref < 1e-4);
    }
  }
}

}  // namespace

TEST_CASE("affine with identity weight and zero bias returns its input") {
  const std::vector<double> x = {0.5, -2.0, 3.25};
  const Tensor w = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor y = affine(Tensor::constant({3}, x), w, Tensor::zeros({3}));
  CHECK(y.shape() == Shape{3});
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.at(i) == x[i]);
}

TEST_CASE("leaky_relu and sigmoid on known values") {
  const Tensor y = leaky_relu(Tensor::constant({3}, {-1.0, 0.0, 2.0}), 0.01);
  CHECK(y.at(0) == doctest::Approx(-0.01).epsilon(1e-15));
  CHECK(y.at(1) == 0.0);
  CHECK(y.at(2) == 2.0);
  const Tensor s = sigmoid(Tensor::constant({3}, {0.0, 800.0, -800.0}));
  CHECK(s.at(0) == 0.5);
  CHECK(s.at(1) == 1.0);
  CHECK(s.at(2) >= 0.0);
  CHECK(std::isfinite(s.at(2)));
}

TEST_CASE("conv3d matches a hand-computed sum") {
  // 1 channel 2x2x2 input, single 2x2x2 kernel of ones: output is the sum plus bias.
  std::vector<double> x(8);
  for (int i = 0; i < 8; ++i) x[i] = i + 1;
  const Tensor y = conv3d(Tensor::constant({1, 2, 2, 2}, x), Tensor::constant({1, 1, 2, 2, 2}, std::vector<double>(8, 1.0)),
                          Tensor::constant({1}, {0.5}), 1);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 36.5);

  // Padding 1 with a 3-kernel keeps the size; the corner sees 8 of 27 taps.
  const Tensor z = conv3d(Tensor::constant({1, 2, 2, 2}, std::vector<double>(8, 1.0)),
                          Tensor::constant({1, 1, 3, 3, 3}, std::vector<double>(27, 1.0)), Tensor::zeros({1}), 1, 1);
  CHECK(z.shape() == Shape{1, 2, 2, 2});
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.at(i) == 8.0);
}

TEST_CASE("mean_aggregate averages groups and leaves empty groups at zero") {
  const Tensor x = Tensor::constant({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor y = mean_aggregate(x, {{0, 2}, {}, {1}});
  CHECK(y.shape() == Shape{3, 2});
  CHECK(y.at(0) == 3.0);
  CHECK(y.at(1) == 4.0);
  CHECK(y.at(2) == 0.0);
  CHECK(y.at(3) == 0.0);
  CHECK(y.at(4) == 3.0);
  CHECK(y.at(5) == 4.0);
}

TEST_CASE("mean_aggregate is bit-identical under reordering of group members") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = Tensor::constant({9, 5}, random_values(45, rng, -1e3, 1e3));
    std::vector<int> grp = {0, 1, 2, 3, 4, 5, 6, 7, 8};
    const Tensor a = mean_aggregate(x, {grp});
    std::shuffle(grp.begin(), grp.end(), rng);
    const Tensor b = mean_aggregate(x, {grp});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
  }
}

TEST_CASE("affine rows are bit-identical under row permutation") {
  std::mt19937_64 rng(11);
  const Tensor w = Tensor::constant({7, 13}, random_values(91, rng));
  const Tensor b = Tensor::constant({7}, random_values(7, rng));
  const Tensor x = Tensor::constant({6, 13}, random_values(78, rng));
  const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  const Tensor y = affine(x, w, b);
  const Tensor yp = affine(gather_rows(x, perm), w, b);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 7; ++c) CHECK(yp.at(r * 7 + c) == y.at(perm[r] * 7 + c));
  }
}

TEST_CASE("shape errors name the op and both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_AS(add(a, b), mot3d::ShapeMismatch);
  CHECK_THROWS_WITH(add(a, b), doctest::Contains("[2, 3]"));
  CHECK_THROWS_AS(affine(a, Tensor::zeros({4, 2}), Tensor::zeros({4})), mot3d::ShapeMismatch);
  CHECK_THROWS_AS(reshape(a, {5}), mot3d::ShapeMismatch);
  CHECK_THROWS_AS(Tensor::leaf({2}, {1.0}, false), mot3d::ShapeMismatch);
  CHECK_THROWS_AS(a.backward(), mot3d::ShapeMismatch);
  CHECK_THROWS_AS(gather_rows(a, std::vector<int>{2}), mot3d::ShapeMismatch);
}

TEST_CASE("gradient reaches a leaf used twice") {
  const Tensor x = Tensor::leaf({2}, {1.0, 2.0}, true);
  sum(add(x, scale(x, 3.0))).backward();
  CHECK(x.grad()[0] == 4.0);
  CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("finite-difference gradients for every primitive") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    SUBCASE("affine batched") {
      check_gradients([](const auto& v) { return affine(v[0], v[1], v[2]); }, {{4, 5}, {3, 5}, {3}}, rng);
    }
    SUBCASE("affine vector") {
      check_gradients([](const auto& v) { return affine(v[0], v[1], v[2]); }, {{5}, {2, 5}, {2}}, rng);
    }
    SUBCASE("leaky_relu") {
      // Values stay away from the kink at zero.
      check_gradients([](const auto& v) { return leaky_relu(v[0], 0.01); }, {{12}}, rng, 0.1, 2.0);
      check_gradients([](const auto& v) { return leaky_relu(v[0], 0.01); }, {{12}}, rng, -2.0, -0.1);
    }
    SUBCASE("sigmoid") { check_gradients([](const auto& v) { return sigmoid(v[0]); }, {{3, 4}}, rng, -4.0, 4.0); }
    SUBCASE("conv3d strided") {
      check_gradients([](const auto& v) { return conv3d(v[0], v[1], v[2], 2); }, {{2, 4, 4, 4}, {3, 2, 2, 2, 2}, {3}},
                      rng);
    }
    SUBCASE("conv3d padded") {
      check_gradients([](const auto& v) { return conv3d(v[0], v[1], v[2], 1, 1); }, {{1, 3, 3, 3}, {2, 1, 3, 3, 3}, {2}},
                      rng);
    }
    SUBCASE("mean_aggregate") {
      check_gradients([](const auto& v) { return mean_aggregate(v[0], {{0, 3, 4}, {1}, {}, {2, 4}}); }, {{5, 3}}, rng);
    }
    SUBCASE("concat gather reshape") {
      check_gradients(
          [](const auto& v) {
            const std::vector<int> idx = {2, 0, 2};
            return reshape(gather_rows(concat({v[0], v[1]}), idx), {3, 2, 3});
          },
          {{3, 2}, {3, 4}}, rng);
    }
    SUBCASE("add scale sum") {
      check_gradients([](const auto& v) { return scale(add(v[0], v[1]), -1.5); }, {{2, 3}, {2, 3}}, rng);
      check_gradients([](const auto& v) { return sum(v[0]); }, {{7}}, rng);
    }
  }
}
