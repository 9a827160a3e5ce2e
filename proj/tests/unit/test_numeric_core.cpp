#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "s2s/error.hpp"
#include "s2s/rng.hpp"
#include "s2s/simplex.hpp"
#include "s2s/tensor.hpp"

using namespace s2s;
using doctest::Approx;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double spread) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal() * spread;
  return v;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("tensor rejects inconsistent extents and non-finite data") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), UsageError);
  CHECK_THROWS_AS(Tensor({2, 0}, {}), UsageError);
  CHECK_THROWS_AS(Tensor({1, 2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}), NumericError);
  CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<float>::infinity()}), NumericError);
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0f);
  CHECK(t.row(1)[0] == 4.0f);
  CHECK(t.shape_string() == "[2, 3]");
}

TEST_CASE("softmax examples") {
  const auto u = softmax(std::vector<double>{0, 0, 0});
  for (double x : u) CHECK(x == Approx(1.0 / 3.0));
  const auto far = softmax(std::vector<double>{0.0, 1000.0});
  CHECK(far[0] == Approx(0.0));
  CHECK(far[1] == Approx(1.0));
  const std::vector<double> v = {0.3, -1.2, 2.5, 0.0};
  std::vector<double> shifted = v;
  for (auto& x : shifted) x += 123.25;
  const auto a = softmax(v);
  const auto b = softmax(shifted);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(a[i] == Approx(b[i]).epsilon(1e-12));
  CHECK_THROWS_AS(softmax(std::vector<double>{}), UsageError);
}

TEST_CASE("sparsemax examples") {
  const auto u = sparsemax(std::vector<double>{1, 1, 1});
  for (double x : u) CHECK(x == Approx(1.0 / 3.0));
  const auto id = sparsemax(std::vector<double>{0.6, 0.4});
  CHECK(id[0] == Approx(0.6));
  CHECK(id[1] == Approx(0.4));
  const auto hot = sparsemax(std::vector<double>{2, 0, 0});
  CHECK(hot == std::vector<double>{1, 0, 0});
  const auto brute = oracle::simplex_projection({2, 0, 0});
  for (std::size_t i = 0; i < 3; ++i) CHECK(hot[i] == Approx(brute[i]));
  CHECK_THROWS_AS(sparsemax(std::vector<double>{}), UsageError);
}

TEST_CASE("sparsemax support is the set above the threshold") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto v = random_vector(rng, 1 + rng.below(12), 1.5);
    const auto r = sparsemax_full(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool in = std::find(r.support.begin(), r.support.end(), i) != r.support.end();
      CHECK(in == (v[i] > r.threshold));
      CHECK(r.probs[i] == Approx(std::max(v[i] - r.threshold, 0.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sparsemax ties at the boundary follow the sorted prefix") {
  const auto a = sparsemax_full(std::vector<double>{0.5, 0.5, 0.5, -3});
  CHECK(a.support == std::vector<std::size_t>{0, 1, 2});
  const auto b = sparsemax_full(std::vector<double>{0, 1, 0});
  CHECK(b.probs == std::vector<double>{0, 1, 0});
  CHECK(b.support == std::vector<std::size_t>{1});
  // Equal values share one output whichever order they sort in.
  const auto c = sparsemax_full(std::vector<double>{0.2, 0.9, 0.2, 0.9});
  CHECK(c.probs[0] == c.probs[2]);
  CHECK(c.probs[1] == c.probs[3]);
}

TEST_CASE("sparsemax is invariant to adding a constant") {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto v = random_vector(rng, 1 + rng.below(10), 1.0);
    auto w = v;
    for (auto& x : w) x += 2.75;
    const auto a = sparsemax(v);
    const auto b = sparsemax(w);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(a[i] == Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("softmax and sparsemax sum to one on 1000 random inputs") {
  Rng rng(17);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto v = random_vector(rng, 1 + rng.below(32), rng.uniform(0.01, 10.0));
    const auto s = softmax(v);
    const auto p = sparsemax(v);
    worst = std::max({worst, std::abs(sum(s) - 1.0), std::abs(sum(p) - 1.0)});
    for (double x : s) CHECK(x >= 0.0);
    for (double x : p) CHECK(x >= 0.0);
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("sparsemax matches the brute-force projection") {
  Rng rng(29);
  for (int t = 0; t < 300; ++t) {
    const auto v = random_vector(rng, 1 + rng.below(9), rng.uniform(0.1, 4.0));
    const auto got = sparsemax(v);
    const auto want = oracle::simplex_projection(v);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(got[i] == Approx(want[i]).epsilon(1e-9));
  }
}

TEST_CASE("l2_normalize examples") {
  const auto a = l2_normalize(std::vector<double>{3, 4});
  CHECK(a[0] == Approx(0.6));
  CHECK(a[1] == Approx(0.8));
  const std::vector<double> unit = {0.0, 1.0, 0.0};
  CHECK(l2_normalize(unit) == unit);
  CHECK(l2_normalize(std::vector<double>{0, 0}) == std::vector<double>{0, 0});
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto v = random_vector(rng, 7, 3.0);
    const auto n = l2_normalize(v);
    double s = 0.0;
    for (double x : n) s += x * x;
    CHECK(std::sqrt(s) == Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("finite_diff_grad examples") {
  const auto sum_f = [](std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0); };
  for (double g : finite_diff_grad(sum_f, std::vector<double>{0.5, -2, 7}, 1e-3)) CHECK(g == Approx(1.0));
  const auto sq = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  const auto g = finite_diff_grad(sq, std::vector<double>{1, 2}, 1e-3);
  CHECK(std::abs(g[0] - 2.0) < 1e-4);
  CHECK(std::abs(g[1] - 4.0) < 1e-4);
  const auto c = finite_diff_grad([](std::span<const double>) { return 3.0; }, std::vector<double>{1, 2, 3}, 1e-3);
  for (double x : c) CHECK(std::abs(x) < 1e-6);
  const auto bad = [](std::span<const double> x) { return x[0] > 0 ? std::numeric_limits<double>::infinity() : 0.0; };
  CHECK_THROWS_AS(finite_diff_grad(bad, std::vector<double>{0.0}, 1e-3), NumericError);
}

TEST_CASE("rng substreams are independent of sibling consumption") {
  Rng root(42);
  Rng a = root.split(1);
  Rng b = root.split(2);
  const auto first_b = b.next_u64();
  Rng a2 = root.split(1);
  for (int i = 0; i < 100; ++i) a2.next_u64();
  Rng b2 = root.split(2);
  CHECK(b2.next_u64() == first_b);
  CHECK(a.next_u64() != first_b);
  Rng x(7);
  Rng y(7);
  for (int i = 0; i < 20; ++i) CHECK(x.normal() == y.normal());
}

TEST_CASE("rng helpers stay in range") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(5) < 5);
    const int r = rng.range(-2, 2);
    CHECK(r >= -2);
    CHECK(r <= 2);
  }
  const auto pick = rng.choose(10, 10);
  std::vector<std::size_t> sorted = pick;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}
