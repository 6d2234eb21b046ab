#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mfl/gan.hpp"
#include "mfl/parallel.hpp"

using namespace mfl;
using namespace mfl::gan;

namespace {

// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) {
      ++i;
    } else {
      ++j;
    }
    const double fa = static_cast<double>(i) / static_cast<double>(a.size());
    const double fb = static_cast<double>(j) / static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  const double ne = static_cast<double>(a.size()) * static_cast<double>(b.size()) /
                    static_cast<double>(a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> random_cloud(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> out(3 * n);
  for (auto& v : out) v = d(gen);
  return out;
}

}  // namespace

TEST_CASE("relu feature values") {
  const std::vector<double> x1 = {1.0, 1.0, 0.0};
  const std::vector<double> z2 = {2.0};
  CHECK(relu_feature(x1, z2) == 2.0);

  const std::vector<double> x2 = {3.0, 1.0, -5.0};
  CHECK(relu_feature(x2, z2) == 0.0);

  const std::vector<double> x3 = {-2.0, 1.0, 1.0, 1.0};  // C=-2, A=(1,1), b=1
  const std::vector<double> z3 = {1.0, 2.0};
  CHECK(relu_feature(x3, z3) == -8.0);
}

TEST_CASE("generator log density") {
  // All-dead ReLUs: the generator is the pure Gaussian N(0, sigma^2/(2 lambda)).
  std::vector<double> dead = {1.0, 0.0, -1.0, -2.0, 0.0, -0.5};
  const std::vector<double> z = {0.7};
  const double got = generator_logdensity(dead, 1, z, 0.4, 0.2);
  CHECK(got == doctest::Approx(-(2.0 / 0.16) * 0.1 * 0.49).epsilon(1e-14));

  // Feature mean 1 at z=0: -(2/0.16)(1 + 0) = -12.5.
  std::vector<double> unit = {2.0, 0.0, 0.5};  // phi = 2 * 0.5 = 1 for all z
  const std::vector<double> z0 = {0.0};
  CHECK(generator_logdensity(unit, 1, z0, 0.4, 0.2) == doctest::Approx(-12.5).epsilon(1e-14));

  // Monotone decreasing in the feature mean at fixed z.
  std::vector<double> bigger = {3.0, 0.0, 0.5};  // phi = 1.5
  CHECK(generator_logdensity(bigger, 1, z0, 0.4, 0.2) <
        generator_logdensity(unit, 1, z0, 0.4, 0.2));
}

TEST_CASE("piecewise-linear feature mean matches the direct average") {
  const auto cloud = random_cloud(500, 42);
  const auto fm = gan::detail::FeatureMean1d::build(cloud);
  for (double z = -3.0; z <= 3.0; z += 0.17) {
    double direct = 0.0;
    const std::vector<double> zv = {z};
    for (std::size_t k = 0; k < 500; ++k) {
      direct += relu_feature(std::span<const double>(cloud).subspan(k * 3, 3), zv);
    }
    direct /= 500.0;
    CHECK(fm(z) == doctest::Approx(direct).epsilon(1e-11));
  }
}

TEST_CASE("sorted-sample gradient path matches the direct gradient") {
  const auto cloud = random_cloud(64, 7);
  std::mt19937 gen(8);
  std::normal_distribution<double> nd(0.5, 1.3);
  std::vector<double> gen_s(400), data_s(300);
  for (auto& v : gen_s) v = nd(gen);
  for (auto& v : data_s) v = nd(gen);

  gan::detail::DiscriminatorOracle oracle(1, 0.2);
  oracle.set_samples(gen_s, data_s);
  auto env = std::make_shared<Environment>(Environment::single_point());
  auto state = init_state(env, {PlayerSpec{3}}, 4, PointInit{{0.0, 0.0, 0.0}}, 0);
  const auto snap = snapshot(state);

  for (std::size_t k = 0; k < 64; ++k) {
    const auto x = std::span<const double>(cloud).subspan(k * 3, 3);
    const auto direct = discriminator_grad(x, 1, gen_s, data_s, 0.2);
    std::vector<double> fast(3);
    oracle.drift(0, snap, x, 0, fast);
    for (std::size_t q = 0; q < 3; ++q) {
      CHECK(fast[q] == doctest::Approx(direct[q]).epsilon(1e-11));
    }
  }
}

TEST_CASE("matched sample multisets leave only the ridge gradient") {
  const auto cloud = random_cloud(32, 3);
  std::mt19937 gen(9);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> zs(200);
  for (auto& v : zs) v = nd(gen);

  for (std::size_t k = 0; k < 32; ++k) {
    const auto x = std::span<const double>(cloud).subspan(k * 3, 3);
    const auto grad = discriminator_grad(x, 1, zs, zs, 0.2);
    for (std::size_t q = 0; q < 3; ++q) {
      CHECK(grad[q] == 0.2 * x[q]);  // exact: the means cancel term by term
    }
  }

  // Fast path cancels exactly as well.
  gan::detail::DiscriminatorOracle oracle(1, 0.2);
  oracle.set_samples(zs, zs);
  auto env = std::make_shared<Environment>(Environment::single_point());
  auto state = init_state(env, {PlayerSpec{3}}, 4, PointInit{{0.0, 0.0, 0.0}}, 0);
  const auto snap = snapshot(state);
  std::vector<double> out(3);
  const std::vector<double> x = {0.5, -1.0, 0.25};
  oracle.drift(0, snap, x, 0, out);
  CHECK(out[0] == 0.2 * 0.5);
  CHECK(out[1] == 0.2 * -1.0);
  CHECK(out[2] == 0.2 * 0.25);
}

TEST_CASE("single-sample hand check at lambda = 0") {
  const std::vector<double> x = {2.0, 1.5, 0.5};  // active for z = 1: 1.5 + 0.5 = 2
  const std::vector<double> z = {1.0};
  const std::vector<double> none = {-10.0};  // dead for this x

  const auto g_gen = discriminator_grad(x, 1, z, none, 0.0);
  CHECK(g_gen[0] == doctest::Approx(-2.0));        // -(Az+b)^+
  CHECK(g_gen[1] == doctest::Approx(-2.0 * 1.0));  // -C z
  CHECK(g_gen[2] == doctest::Approx(-2.0));        // -C

  const auto g_data = discriminator_grad(x, 1, none, z, 0.0);
  CHECK(g_data[0] == doctest::Approx(2.0));
  CHECK(g_data[1] == doctest::Approx(2.0));
  CHECK(g_data[2] == doctest::Approx(2.0));
}

TEST_CASE("discriminator gradient matches central differences of the objective") {
  // Phi_hat(x) = -[mean_gen phi(x,z) - mean_data phi(x,z)] + (lambda/2)|x|^2
  // with common random numbers.
  std::mt19937 gen(10);
  std::normal_distribution<double> nd(0.3, 1.1);
  std::vector<double> gen_s(3000), data_s(2500);
  for (auto& v : gen_s) v = nd(gen);
  for (auto& v : data_s) v = nd(gen);
  const double lambda = 0.2;

  auto objective = [&](std::span<const double> x) {
    double mg = 0.0, md = 0.0;
    const std::vector<double> zv(1);
    for (double z : gen_s) {
      const std::vector<double> zz = {z};
      mg += relu_feature(x, zz);
    }
    for (double z : data_s) {
      const std::vector<double> zz = {z};
      md += relu_feature(x, zz);
    }
    mg /= static_cast<double>(gen_s.size());
    md /= static_cast<double>(data_s.size());
    double x2 = 0.0;
    for (double v : x) x2 += v * v;
    return -(mg - md) + 0.5 * lambda * x2;
  };

  const std::vector<double> x = {0.8, 1.2, -0.4};
  const auto grad = discriminator_grad(x, 1, gen_s, data_s, lambda);
  for (std::size_t q = 0; q < 3; ++q) {
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    const double h = 1e-6 * (1.0 + std::abs(x[q]));
    xp[q] += h;
    xm[q] -= h;
    const double fd = (objective(xp) - objective(xm)) / (2.0 * h);
    CHECK(grad[q] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("metropolis sampler reproduces Gaussian moments") {
  auto logdens = [](std::span<const double> z) { return -0.5 * z[0] * z[0]; };
  const auto res = mh_sample(logdens, 100000, 1, MhSettings{}, 2024);
  const std::size_t n = res.samples.size();
  CHECK(n == 80000);  // 20% burn-in discarded
  double mean = 0.0, var = 0.0;
  for (double v : res.samples) mean += v;
  mean /= static_cast<double>(n);
  for (double v : res.samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
  CHECK(res.acceptance_rate > 0.3);
  CHECK(res.acceptance_rate < 0.6);
}

TEST_CASE("metropolis sampler reproduces exponential moments") {
  auto logdens = [](std::span<const double> z) {
    return z[0] > 0.0 ? -z[0] : -std::numeric_limits<double>::infinity();
  };
  MhSettings s;
  s.init = {1.0};
  const auto res = mh_sample(logdens, 100000, 1, s, 77);
  double mean = 0.0;
  for (double v : res.samples) mean += v;
  mean /= static_cast<double>(res.samples.size());
  CHECK(std::abs(mean - 1.0) < 0.02);
}

TEST_CASE("symmetric target yields a sign-symmetric chain") {
  auto logdens = [](std::span<const double> z) { return -0.5 * z[0] * z[0]; };
  // Thin to beat autocorrelation: the KS null assumes independent samples.
  MhSettings s;
  s.thin = 10;
  const auto res = mh_sample(logdens, 100000, 1, s, 3131);
  std::vector<double> flipped = res.samples;
  for (auto& v : flipped) v = -v;
  CHECK(ks_two_sample_p(res.samples, flipped) > 0.01);
}

TEST_CASE("metropolis error paths") {
  auto nan_dens = [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_WITH_AS(mh_sample(nan_dens, 100, 1, MhSettings{}, 1),
                       doctest::Contains("NonFiniteLogDensity"), Error);
  auto neg_dens = [](std::span<const double> z) {
    return z[0] > 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  };
  MhSettings s;
  s.init = {-1.0};  // starts in the forbidden region
  CHECK_THROWS_AS(mh_sample(neg_dens, 100, 1, s, 1), Error);
}

TEST_CASE("training error reduces to the Gaussian closed form for dead ReLUs") {
  // All-dead cloud: phi = 0 everywhere, mu* = N(0, sigma^2/(2 lambda)), and
  // the value is (lambda/2) E|X|^2 + (sigma^2/4) ln(2 pi sigma^2 / (2 lambda)).
  const double sigma = 0.4, lambda = 0.2;
  std::vector<double> cloud;
  std::mt19937 gen(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    cloud.push_back(nd(gen));   // C
    cloud.push_back(0.0);       // A = 0
    cloud.push_back(-std::abs(nd(gen)) - 0.1);  // b < 0: dead for every z
  }
  double m2 = 0.0;
  for (std::size_t k = 0; k < 200; ++k) {
    for (std::size_t q = 0; q < 3; ++q) m2 += cloud[k * 3 + q] * cloud[k * 3 + q];
  }
  m2 /= 200.0;

  std::vector<double> gen_s(4000), data_s(4000);
  const double vstar = sigma * sigma / (2.0 * lambda);
  std::normal_distribution<double> gstar(0.0, std::sqrt(vstar));
  for (auto& v : gen_s) v = gstar(gen);
  for (auto& v : data_s) v = gstar(gen);

  const auto rep = training_error(cloud, 1, gen_s, data_s, sigma, lambda);
  const double closed_form =
      0.5 * lambda * m2 + 0.25 * sigma * sigma * std::log(2.0 * M_PI * vstar);
  CHECK(rep.value == doctest::Approx(closed_form).epsilon(1e-6));

  // The generator-sample terms cancel algebraically, so doubling them moves
  // the estimate by far less than two standard errors.
  std::vector<double> gen2 = gen_s;
  gen2.insert(gen2.end(), 4000, 0.33);
  const auto rep2 = training_error(cloud, 1, gen2, data_s, sigma, lambda);
  CHECK(std::abs(rep2.value - rep.value) <= 2.0 * (*rep.std_error + *rep2.std_error) + 1e-12);
}

TEST_CASE("log-density differences are invariant to a uniform b shift") {
  // Cloud kept fully active on |z| <= 2 so the shift only adds a constant.
  std::vector<double> cloud;
  std::mt19937 gen(6);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    cloud.push_back(nd(gen));
    cloud.push_back(1.0);
    cloud.push_back(10.0 + std::abs(nd(gen)));  // active for z > -10
  }
  std::vector<double> shifted = cloud;
  for (std::size_t k = 0; k < 100; ++k) shifted[k * 3 + 2] += 0.125;

  const std::vector<double> z1 = {1.5}, z2 = {-0.75};
  const double d0 = generator_logdensity(cloud, 1, z1, 0.4, 0.2) -
                    generator_logdensity(cloud, 1, z2, 0.4, 0.2);
  const double d1 = generator_logdensity(shifted, 1, z1, 0.4, 0.2) -
                    generator_logdensity(shifted, 1, z2, 0.4, 0.2);
  CHECK(d0 == doctest::Approx(d1).epsilon(1e-12));
}

TEST_CASE("tiny training run: shape and determinism across thread counts") {
  GanConfig cfg;
  cfg.n_particles = 50;
  cfg.n_steps = 3;
  cfg.n_gen_samples = 2000;
  cfg.n_data_samples = 2000;
  cfg.n_chains = 4;
  cfg.seed = 99;

  set_num_threads(2);
  const auto a = train(cfg);
  CHECK(a.rows.size() == 4);

  set_num_threads(1);
  const auto b = train(cfg);
  set_num_threads(2);

  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].train_error == b.rows[i].train_error);
    CHECK(a.rows[i].train_error_with_entropy == b.rows[i].train_error_with_entropy);
    CHECK(a.rows[i].acceptance == b.rows[i].acceptance);
    CHECK(a.rows[i].w1_to_data == b.rows[i].w1_to_data);
  }
  const auto ca = a.final_state.cloud(0, 0);
  const auto cb = b.final_state.cloud(0, 0);
  for (std::size_t q = 0; q < ca.size(); ++q) CHECK(ca[q] == cb[q]);

  GanConfig zero = cfg;
  zero.n_steps = 0;
  CHECK(train(zero).rows.size() == 1);
}
