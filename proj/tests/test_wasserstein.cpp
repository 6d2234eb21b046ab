#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "mfl/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mfl;
using namespace mfl_test;

namespace {

std::vector<double> gaussian_draws(std::size_t n, double mean, double std, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> d(mean, std);
  std::vector<double> out(n);
  for (auto& v : out) v = d(gen);
  return out;
}

std::vector<double> random_cloud(std::size_t n, std::size_t d, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> out(n * d);
  for (auto& v : out) v = u(gen);
  return out;
}

}  // namespace

TEST_CASE("w_1d basics") {
  std::vector<double> a = {0.3, -1.2, 0.8, 0.0};
  CHECK(metrics::w_1d(a, a, 1) == 0.0);
  CHECK(metrics::w_1d(a, a, 2) == 0.0);

  std::vector<double> zeros(50, 0.0), shifted(50, -2.5);
  CHECK(metrics::w_1d(zeros, shifted, 1) == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(metrics::w_1d(zeros, shifted, 2) == doctest::Approx(2.5).epsilon(1e-14));

  CHECK_THROWS_AS(metrics::w_1d({}, {1.0}, 1), Error);
}

TEST_CASE("w_1d of shifted Gaussians matches the mean gap") {
  // Closed form: W_1(N(0,1), N(1,1)) = |delta mean| = 1.
  const auto a = gaussian_draws(100000, 0.0, 1.0, 101);
  const auto b = gaussian_draws(100000, 1.0, 1.0, 202);
  CHECK(metrics::w_1d(a, b, 1) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("w_1d quantile alignment for unequal counts") {
  const auto a = gaussian_draws(50000, 0.0, 1.0, 11);
  const auto b = gaussian_draws(70000, 1.0, 1.0, 12);
  CHECK(metrics::w_1d(a, b, 1) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("w_exact basics") {
  std::vector<double> a = {0.0, 0.0, 1.0, 0.0};  // two points in R^2
  std::vector<double> b = {1.0, 0.0, 0.0, 0.0};  // same points, swapped
  CHECK(metrics::w_exact(a, a, 2, 1) == 0.0);
  CHECK(metrics::w_exact(a, b, 2, 1) == 0.0);
  CHECK(metrics::w_exact(a, b, 2, 2) == 0.0);

  std::vector<double> big((metrics::kExactAssignmentLimit + 1) * 1, 0.0);
  CHECK_THROWS_WITH_AS(metrics::w_exact(big, big, 1, 1), doctest::Contains("TooManyParticles"),
                       Error);
  const std::vector<double> two = {1.0, 2.0}, one = {1.0};
  CHECK_THROWS_AS(metrics::w_exact(two, one, 1, 1), Error);
}

TEST_CASE("w_exact agrees exactly with the independent Munkres oracle") {
  for (unsigned inst = 0; inst < 20; ++inst) {
    const std::size_t d = 1 + inst % 3;
    const std::size_t n = 64;
    const auto a = random_cloud(n, d, 1000 + inst);
    const auto b = random_cloud(n, d, 2000 + inst);
    for (int p : {1, 2}) {
      const double x = metrics::w_exact(a, b, d, p);
      const double y = hungarian_wasserstein(a, b, d, p);
      if (d == 1 && p == 1) {
        // 1-D W1 has exactly tied optimal matchings (crossing pairs cost the
        // same), so two solvers may sum different matchings; agreement is
        // then only up to the last ulp.
        CHECK(std::abs(x - y) <= 4e-15 * std::max(1.0, x));
      } else {
        CHECK(x == y);
      }
    }
  }
}

TEST_CASE("w_exact agrees with brute force on tiny instances") {
  for (unsigned inst = 0; inst < 30; ++inst) {
    const std::size_t n = 2 + inst % 7;
    const std::size_t d = 1 + inst % 2;
    const auto a = random_cloud(n, d, 300 + inst);
    const auto b = random_cloud(n, d, 400 + inst);
    std::vector<double> cost(n * n);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = 0; l < n; ++l) {
        double s = 0.0;
        for (std::size_t q = 0; q < d; ++q) {
          const double diff = a[k * d + q] - b[l * d + q];
          s += diff * diff;
        }
        cost[k * n + l] = std::sqrt(s);
      }
    }
    const double brute = brute_force_assignment_cost(cost, n) / static_cast<double>(n);
    CHECK(metrics::w_exact(a, b, d, 1) == doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("distance axioms on small clouds") {
  for (unsigned inst = 0; inst < 50; ++inst) {
    const std::size_t d = 1 + inst % 3;
    const std::size_t n = 4 + inst % 29;
    const auto a = random_cloud(n, d, 10 + inst);
    const auto b = random_cloud(n, d, 60 + inst);
    const auto c = random_cloud(n, d, 110 + inst);
    for (int p : {1, 2}) {
      const double ab = metrics::w_exact(a, b, d, p);
      const double ba = metrics::w_exact(b, a, d, p);
      const double ac = metrics::w_exact(a, c, d, p);
      const double cb = metrics::w_exact(c, b, d, p);
      CHECK(ab >= 0.0);
      CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
      CHECK(metrics::w_exact(a, a, d, p) == 0.0);
      CHECK(ab <= ac + cb + 1e-12);
    }
  }
}

TEST_CASE("w_sliced reduces to w_1d in one dimension") {
  const auto a = gaussian_draws(500, 0.0, 1.0, 5);
  const auto b = gaussian_draws(500, 0.5, 1.3, 6);
  const double direct = metrics::w_1d(a, b, 1);
  for (std::size_t nproj : {1u, 3u, 16u}) {
    CHECK(metrics::w_sliced(a, b, 1, 1, nproj, 42) == doctest::Approx(direct).epsilon(1e-12));
  }
  CHECK(metrics::w_sliced(a, a, 1, 1, 8, 42) == 0.0);
}

TEST_CASE("sliced distance of translated clouds equals the directional integral") {
  // Two standard Gaussian clouds in R^3 offset by v; the sliced W1 estimates
  // E_u |<v,u>| = |v|/2 in d=3 (verified below by Monte Carlo quadrature).
  const std::vector<double> v = {0.8, -0.6, 1.0};
  const double vnorm = std::sqrt(0.8 * 0.8 + 0.6 * 0.6 + 1.0);
  const std::size_t n = 20000, d = 3;
  std::mt19937 gen(77);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> a(n * d), b(n * d);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t q = 0; q < d; ++q) {
      const double x = normal(gen);
      a[k * d + q] = x;
      b[k * d + q] = x + v[q];
    }
  }
  const double mc = mc_directional_mean(v, 200000, 123);
  CHECK(mc == doctest::Approx(vnorm * 0.5).epsilon(0.01));  // c_3 = 1/2
  const double sliced = metrics::w_sliced(a, b, d, 1, 128, 99);
  CHECK(sliced == doctest::Approx(mc).epsilon(0.05));
  // Deterministic given the seed.
  CHECK(sliced == metrics::w_sliced(a, b, d, 1, 128, 99));
}

TEST_CASE("avg_wasserstein") {
  auto env = std::make_shared<Environment>(
      make_environment(std::vector<double>{0.0, 1.0}, {0.5, 0.5}));

  auto a = init_state(env, {PlayerSpec{1}}, 32, PointInit{{0.0}}, 0);
  auto b = init_state(env, {PlayerSpec{1}}, 32, PointInit{{0.0}}, 0);
  CHECK(metrics::avg_wasserstein(a, b, 1) == 0.0);

  // Translate only the second conditional cloud by c: average W1 = c/2.
  const double c = 3.2;
  for (auto& x : b.mutable_cloud(0, 1)) x += c;
  CHECK(metrics::avg_wasserstein(a, b, 1) == doctest::Approx(c / 2.0).epsilon(1e-12));
  CHECK(metrics::avg_wasserstein(a, b, 2) ==
        doctest::Approx(c / std::sqrt(2.0)).epsilon(1e-12));

  // Degenerate environment reduces to the lone conditional distance.
  auto pa = init_state(point_env(), {PlayerSpec{2}}, 24, GaussianInit{0.0, 1.0}, 1);
  auto pb = init_state(point_env(), {PlayerSpec{2}}, 24, GaussianInit{0.0, 1.0}, 2);
  CHECK(metrics::avg_wasserstein(pa, pb, 1) ==
        doctest::Approx(metrics::w_exact(pa.cloud(0, 0), pb.cloud(0, 0), 2, 1))
            .epsilon(1e-15));

  auto other_env = std::make_shared<Environment>(
      make_environment(std::vector<double>{0.0, 2.0}, {0.5, 0.5}));
  auto d = init_state(other_env, {PlayerSpec{1}}, 32, PointInit{{0.0}}, 0);
  CHECK_THROWS_WITH_AS(metrics::avg_wasserstein(a, d, 1),
                       doctest::Contains("EnvironmentMismatch"), Error);
}
