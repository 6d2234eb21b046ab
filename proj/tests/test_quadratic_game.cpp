#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "mfl/games/quadratic.hpp"
#include "mfl/integrator.hpp"
#include "mfl/metrics.hpp"
#include "support.hpp"

using namespace mfl;
using namespace mfl_test;

TEST_CASE("decoupled one-player game is the OU anchor") {
  games::QuadraticGameSpec spec;
  spec.stiffness = {1.0};
  spec.coupling = {{0.0}};
  games::QuadraticOracle game(spec, {PlayerSpec{1}});

  auto state = init_state(point_env(), {PlayerSpec{1}}, 4000, GaussianInit{0.0, 1.0}, 1);
  RunConfig cfg;
  cfg.sigma = 0.4;
  cfg.dt = 0.01;
  cfg.seed = 1;
  for (std::size_t s = 0; s < 3000; ++s) mfl_step(state, game, cfg, s);
  // Invariant conditional law N(0, sigma^2/(2a)) from the first-order
  // condition: a x + (sigma^2/2)(-x/v) = 0.
  CHECK(sample_variance(state.cloud(0, 0)) == doctest::Approx(0.08).epsilon(0.07));
}

TEST_CASE("zero cloud means reduce the drift to a g(y) x") {
  games::QuadraticGameSpec spec;
  spec.stiffness = {2.0, 1.5};
  spec.coupling = {{0.0, 0.7}, {0.3, 0.0}};
  games::QuadraticOracle game(spec, {PlayerSpec{1}, PlayerSpec{1}});

  auto env = std::make_shared<Environment>(make_environment(std::vector<double>{0.5}, {1.0}));
  auto state = init_state(env, {PlayerSpec{1}, PlayerSpec{1}}, 16, PointInit{{0.0}}, 0);
  const auto snap = snapshot(state);
  game.prepare(snap);
  std::vector<double> x = {1.25};
  std::vector<double> out(1);
  game.drift(0, snap, x, 0, out);
  CHECK(out[0] == doctest::Approx(2.0 * 1.25).epsilon(1e-14));
  game.drift(1, snap, x, 0, out);
  CHECK(out[0] == doctest::Approx(1.5 * 1.25).epsilon(1e-14));
}

TEST_CASE("coupling pulls in the other player's conditional mean") {
  games::QuadraticGameSpec spec;
  spec.stiffness = {1.0, 1.0};
  spec.coupling = {{0.0, 0.5}, {-0.5, 0.0}};
  spec.zero_sum = true;
  games::QuadraticOracle game(spec, {PlayerSpec{1}, PlayerSpec{1}});

  auto state = init_state(point_env(), {PlayerSpec{1}, PlayerSpec{1}}, 8, PointInit{{0.0}}, 0);
  for (auto& v : state.mutable_cloud(1, 0)) v = 2.0;  // player 2 mean = 2
  const auto snap = snapshot(state);
  game.prepare(snap);
  std::vector<double> x = {1.0};
  std::vector<double> out(1);
  game.drift(0, snap, x, 0, out);
  CHECK(out[0] == doctest::Approx(1.0 + 0.5 * 2.0).epsilon(1e-14));
  game.drift(1, snap, x, 0, out);
  CHECK(out[0] == doctest::Approx(1.0 - 0.5 * 0.0).epsilon(1e-14));
}

TEST_CASE("spec validation") {
  games::QuadraticGameSpec bad;
  bad.stiffness = {1.0, -1.0};
  bad.coupling = {{0.0, 0.0}, {0.0, 0.0}};
  CHECK_THROWS_AS(games::QuadraticOracle(bad, {PlayerSpec{1}, PlayerSpec{1}}), Error);

  games::QuadraticGameSpec zs;
  zs.stiffness = {1.0, 1.0};
  zs.coupling = {{0.0, 0.5}, {0.5, 0.0}};  // not antisymmetric
  zs.zero_sum = true;
  CHECK_THROWS_AS(games::QuadraticOracle(zs, {PlayerSpec{1}, PlayerSpec{1}}), Error);
}

TEST_CASE("one-player energy matches the hand formula") {
  games::QuadraticGameSpec spec;
  spec.stiffness = {2.0};
  spec.coupling = {{0.4}};
  games::QuadraticOracle game(spec, {PlayerSpec{1}});

  auto env = std::make_shared<Environment>(
      make_environment(std::vector<double>{0.0, 1.0}, {0.25, 0.75}));
  auto state = init_state(env, {PlayerSpec{1}}, 3, PointInit{{0.0}}, 0);
  state.mutable_cloud(0, 0) = {1.0, 2.0, 3.0};
  state.mutable_cloud(0, 1) = {-1.0, 0.0, 1.0};
  const auto snap = snapshot(state);
  const auto rep = game.energy(snap);
  REQUIRE(rep.has_value());
  // F = sum_j w_j [ (a/2) m2_j + (eps/2) m1_j^2 ]
  const double m2_0 = (1.0 + 4.0 + 9.0) / 3.0;
  const double m1_0 = 2.0;
  const double m2_1 = 2.0 / 3.0;
  const double m1_1 = 0.0;
  const double expected = 0.25 * (1.0 * m2_0 + 0.2 * m1_0 * m1_0) +
                          0.75 * (1.0 * m2_1 + 0.2 * m1_1 * m1_1);
  CHECK(rep->value == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("environment gain modulates the stiffness and must stay positive") {
  games::QuadraticGameSpec spec;
  spec.stiffness = {1.0};
  spec.coupling = {{0.0}};
  spec.g0 = 1.0;
  spec.g1 = 2.0;
  games::QuadraticOracle game(spec, {PlayerSpec{1}});

  auto env = std::make_shared<Environment>(
      make_environment(std::vector<double>{0.0, 0.5}, {0.5, 0.5}));
  auto state = init_state(env, {PlayerSpec{1}}, 4, PointInit{{0.0}}, 0);
  const auto snap = snapshot(state);
  game.prepare(snap);
  std::vector<double> x = {1.0};
  std::vector<double> out(1);
  game.drift(0, snap, x, 0, out);
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-14));  // g = 1 at y=0
  game.drift(0, snap, x, 1, out);
  CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-14));  // g = 2 at y=0.5

  games::QuadraticGameSpec bad = spec;
  bad.g1 = -3.0;  // gain negative at y = 0.5
  games::QuadraticOracle bad_game(bad, {PlayerSpec{1}});
  auto snap2 = snapshot(state);
  CHECK_THROWS_AS(bad_game.env_gain(*env, 1), Error);
}

TEST_CASE("drift is Lipschitz in the clouds with constant gamma") {
  games::QuadraticGameSpec spec;
  spec.stiffness = {1.0, 1.0};
  spec.coupling = {{0.1, 0.3}, {-0.2, 0.25}};
  games::QuadraticOracle game(spec, {PlayerSpec{1}, PlayerSpec{1}});
  const double gamma = spec.declared_gamma();
  CHECK(gamma == doctest::Approx(0.45).epsilon(1e-14));

  // Audit on random cloud pairs: the measure part of the drift difference is
  // bounded by gamma * max_l W1(cloud_l, cloud_l').
  for (unsigned rep = 0; rep < 10; ++rep) {
    auto a = init_state(point_env(), {PlayerSpec{1}, PlayerSpec{1}}, 64,
                        GaussianInit{0.0, 1.0}, 100 + rep);
    auto b = init_state(point_env(), {PlayerSpec{1}, PlayerSpec{1}}, 64,
                        GaussianInit{0.3, 1.4}, 200 + rep);
    const auto sa = snapshot(a);
    const auto sb = snapshot(b);
    double wmax = 0.0;
    for (std::size_t l = 0; l < 2; ++l) {
      auto ca = std::vector<double>(a.cloud(l, 0).begin(), a.cloud(l, 0).end());
      auto cb = std::vector<double>(b.cloud(l, 0).begin(), b.cloud(l, 0).end());
      wmax = std::max(wmax, metrics::w_1d(ca, cb, 1));
    }
    std::vector<double> x = {0.7};
    std::vector<double> da(1), db(1);
    for (std::size_t i = 0; i < 2; ++i) {
      game.prepare(sa);
      game.drift(i, sa, x, 0, da);
      game.prepare(sb);
      game.drift(i, sb, x, 0, db);
      CHECK(std::abs(da[0] - db[0]) <= gamma * 2.0 * wmax + 1e-12);
    }
  }
}
