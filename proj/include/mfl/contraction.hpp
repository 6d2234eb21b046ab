#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfl/errors.hpp"
#include "mfl/integrator.hpp"
#include "mfl/io.hpp"
#include "mfl/metrics.hpp"
#include "mfl/state.hpp"

namespace mfl {

// One-sided contractivity profile kappa: drift differences satisfy
// <x-x', b(x')-b(x)> <= kappa(|x-x'|) |x-x'|^2. Named families keep the tail
// supremum exact.
class KappaProfile {
 public:
  static KappaProfile constant(double value) {
    KappaProfile k;
    k.family_ = Family::Constant;
    k.a_ = value;
    k.validate();
    return k;
  }

  // Linear interpolation through (r, kappa) knots, constant extrapolation on
  // both sides.
  static KappaProfile piecewise_linear(std::vector<std::pair<double, double>> knots) {
    KappaProfile k;
    k.family_ = Family::PiecewiseLinear;
    std::sort(knots.begin(), knots.end());
    if (knots.empty()) throw Error(Errc::EmptySupport, "piecewise_linear needs knots");
    k.knots_ = std::move(knots);
    k.validate();
    return k;
  }

  // kappa(r) = a - b r^2 with b > 0: non-contractive core of width sqrt(a/b),
  // strong contraction in the tails.
  static KappaProfile quadratic_well(double a, double b) {
    if (!(b > 0.0)) throw Error(Errc::KappaNotEventuallyNegative, "quadratic_well needs b > 0");
    KappaProfile k;
    k.family_ = Family::QuadraticWell;
    k.a_ = a;
    k.b_ = b;
    k.validate();
    return k;
  }

  double operator()(double r) const {
    switch (family_) {
      case Family::Constant:
        return a_;
      case Family::QuadraticWell:
        return a_ - b_ * r * r;
      case Family::PiecewiseLinear: {
        if (r <= knots_.front().first) return knots_.front().second;
        if (r >= knots_.back().first) return knots_.back().second;
        for (std::size_t i = 1; i < knots_.size(); ++i) {
          if (r <= knots_[i].first) {
            const auto [r0, v0] = knots_[i - 1];
            const auto [r1, v1] = knots_[i];
            const double w = (r - r0) / (r1 - r0);
            return v0 + w * (v1 - v0);
          }
        }
        return knots_.back().second;
      }
    }
    return 0.0;
  }

  double plus(double r) const { return std::max(0.0, (*this)(r)); }

  // sup_{r >= R} kappa(r); exact per family.
  double tail_sup(double R) const {
    switch (family_) {
      case Family::Constant:
        return a_;
      case Family::QuadraticWell:
        return R <= 0.0 ? a_ : a_ - b_ * R * R;
      case Family::PiecewiseLinear: {
        double s = (*this)(R);
        for (const auto& [r, v] : knots_) {
          if (r >= R) s = std::max(s, v);
        }
        s = std::max(s, knots_.back().second);
        return s;
      }
    }
    return 0.0;
  }

  // Largest knot/feature radius; used to size integration grids.
  double feature_radius() const {
    switch (family_) {
      case Family::Constant:
        return 0.0;
      case Family::QuadraticWell:
        return a_ > 0.0 ? std::sqrt(a_ / b_) : 0.0;
      case Family::PiecewiseLinear:
        return knots_.back().first;
    }
    return 0.0;
  }

  std::vector<double> interior_nodes() const {
    std::vector<double> out;
    if (family_ == Family::PiecewiseLinear) {
      for (const auto& [r, v] : knots_) out.push_back(r);
    }
    return out;
  }

 private:
  enum class Family { Constant, PiecewiseLinear, QuadraticWell };

  void validate() const {
    const double base = std::max(1.0, feature_radius());
    for (int i = 0; i <= 64; ++i) {
      const double r = base * (1.0 + static_cast<double>(i));
      if (!((*this)(r) < 0.0) || !(tail_sup(r) < 0.0)) {
        throw Error(Errc::KappaNotEventuallyNegative,
                    "kappa is not negative on the tail grid (r=" + io::format_double(r) + ")");
      }
    }
  }

  Family family_ = Family::Constant;
  double a_ = -1.0;
  double b_ = 0.0;
  std::vector<std::pair<double, double>> knots_;
};

struct GridSpec {
  double r_max = 0.0;  // 0: auto, max(2 R2, 2 * feature radius)
  std::size_t n_points = 4096;
};

struct ContractionConstants {
  double R1 = 0.0;
  double R2 = 0.0;
  double c = 0.0;
  double phi_R1 = 1.0;
  double sigma = 1.0;
  double gamma = 0.0;  // mean-field Lipschitz constant, supplied by the game
  std::vector<double> r;
  std::vector<double> phi;
  std::vector<double> Phi;
  std::vector<double> f;
  std::vector<double> g;

  double rate_bound() const { return 2.0 * gamma - c * sigma * sigma; }
  bool contractive() const { return rate_bound() < 0.0; }
};

namespace detail {

inline double adaptive_simpson_rec(const std::function<double(double)>& fn, double a,
                                   double b, double fa, double fm, double fb, double whole,
                                   double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = fn(lm);
  const double frm = fn(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0) throw Error(Errc::QuadratureFailure, "adaptive Simpson depth exceeded");
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_rec(fn, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(fn, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

// Adaptive Simpson with absolute tolerance tol.
inline double adaptive_simpson(const std::function<double(double)>& fn, double a, double b,
                               double tol) {
  if (a == b) return 0.0;
  const double fa = fn(a);
  const double fb = fn(b);
  const double fm = fn(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(fn, a, b, fa, fm, fb, whole, std::max(tol, 1e-300), 40);
}

}  // namespace detail

// Explicit Eberle-type constants: R1, R2 by bisection on the monotone tail
// condition, phi/Phi/c/f by cumulative adaptive Simpson on a grid log-spaced
// near zero and linear beyond R2.
inline ContractionConstants eberle_constants(const KappaProfile& kappa, double sigma,
                                             const GridSpec& grid_spec = {}) {
  if (!(sigma > 0.0)) throw Error(Errc::QuadratureFailure, "sigma must be positive");
  constexpr double kTolR = 1e-10;
  constexpr double kRelTol = 1e-8;

  ContractionConstants out;
  out.sigma = sigma;

  // R1 = inf{R >= 0 : kappa <= 0 on [R, inf)}.
  if (kappa.tail_sup(0.0) <= 0.0) {
    out.R1 = 0.0;
  } else {
    double lo = 0.0;
    double hi = std::max(1.0, kappa.feature_radius());
    while (kappa.tail_sup(hi) > 0.0) hi *= 2.0;
    while (hi - lo > kTolR) {
      const double mid = 0.5 * (lo + hi);
      (kappa.tail_sup(mid) <= 0.0 ? hi : lo) = mid;
    }
    out.R1 = hi;
  }

  // R2 = inf{R >= R1 : kappa(r) R (R - R1) <= -4 sigma^2 for r >= R}.
  {
    const double target = -4.0 * sigma * sigma;
    auto ok = [&](double R) { return kappa.tail_sup(R) * R * (R - out.R1) <= target; };
    double lo = out.R1;
    double hi = std::max({out.R1 + 1.0, 2.0 * out.R1, 1.0});
    while (!ok(hi)) hi *= 2.0;
    while (hi - lo > kTolR) {
      const double mid = 0.5 * (lo + hi);
      (ok(mid) ? hi : lo) = mid;
    }
    out.R2 = hi;
  }

  // Output grid: log-spaced on (0, R2], linear on [R2, r_max].
  double r_max = grid_spec.r_max;
  if (r_max <= 0.0) r_max = std::max(2.0 * out.R2, 2.0 * kappa.feature_radius());
  r_max = std::max(r_max, 1.0001 * out.R2);
  const std::size_t n_points = std::max<std::size_t>(grid_spec.n_points, 64);
  std::vector<double> r;
  r.push_back(0.0);
  const std::size_t n_log = n_points / 2;
  const double r_lo = out.R2 * 1e-6;
  for (std::size_t i = 0; i < n_log; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_log - 1);
    r.push_back(r_lo * std::pow(out.R2 / r_lo, t));
  }
  const std::size_t n_lin = n_points - n_log;
  for (std::size_t i = 1; i <= n_lin; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_lin);
    r.push_back(out.R2 + t * (r_max - out.R2));
  }
  if (out.R1 > 0.0 && out.R1 < r_max) r.push_back(out.R1);
  for (double knot : kappa.interior_nodes()) {
    if (knot > 0.0 && knot < r_max) r.push_back(knot);
  }
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  const std::size_t M = r.size();

  // Pass 1: exponent A(r) = int_0^r u kappa^+(u) du at grid nodes, then phi.
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  auto kplus_integrand = [&](double u) { return u * kappa.plus(u); };
  std::vector<double> A(M, 0.0);
  for (std::size_t i = 1; i < M; ++i) {
    const double tol = kRelTol * std::max(1.0, std::abs(A[i - 1]));
    A[i] = A[i - 1] + detail::adaptive_simpson(kplus_integrand, r[i - 1], r[i], tol);
  }
  out.r = r;
  out.phi.resize(M);
  for (std::size_t i = 0; i < M; ++i) out.phi[i] = std::exp(-A[i] * inv2s2);

  // phi anywhere (for nested integrands): exponent from the nearest node.
  auto index_below = [&](double s) {
    const auto it = std::upper_bound(r.begin(), r.end(), s);
    return static_cast<std::size_t>(std::distance(r.begin(), it)) - 1;
  };
  auto phi_at = [&](double s) {
    const std::size_t i = index_below(s);
    const double a = A[i] + detail::adaptive_simpson(kplus_integrand, r[i], s, kRelTol);
    return std::exp(-a * inv2s2);
  };

  // Pass 2: Phi = int phi and G = int Phi/phi (cumulative).
  std::vector<double> G(M, 0.0);
  out.Phi.assign(M, 0.0);
  for (std::size_t i = 1; i < M; ++i) {
    const double tol_phi = kRelTol * std::max(1e-6, out.Phi[i - 1]);
    out.Phi[i] = out.Phi[i - 1] +
                 detail::adaptive_simpson(phi_at, r[i - 1], r[i], tol_phi);
  }
  auto Phi_at = [&](double s) {
    const std::size_t i = index_below(s);
    return out.Phi[i] + detail::adaptive_simpson(phi_at, r[i], s, kRelTol * 1e-2);
  };
  auto G_integrand = [&](double s) { return Phi_at(s) / phi_at(s); };
  for (std::size_t i = 1; i < M; ++i) {
    if (r[i - 1] >= out.R2) {
      G[i] = G[i - 1] + detail::adaptive_simpson(G_integrand, r[i - 1], r[i],
                                                 kRelTol * std::max(1e-6, G[i - 1]));
    } else {
      const double hi = std::min(r[i], out.R2);
      G[i] = G[i - 1] + detail::adaptive_simpson(G_integrand, r[i - 1], hi,
                                                 kRelTol * std::max(1e-6, G[i - 1]));
      if (r[i] > out.R2) {
        G[i] += detail::adaptive_simpson(G_integrand, out.R2, r[i], kRelTol);
      }
    }
  }
  // c^{-1} = G(R2); R2 is a grid node by construction.
  const std::size_t i_R2 = index_below(out.R2);
  const double G_R2 = G[i_R2];
  if (!(G_R2 > 0.0) || !std::isfinite(G_R2)) {
    throw Error(Errc::QuadratureFailure, "degenerate integral for c");
  }
  out.c = 1.0 / G_R2;
  out.phi_R1 = phi_at(out.R1);

  // Pass 3: g(r) = 1 - (c/2) int_0^r Phi/phi and f = int phi(s) g(s ^ R2).
  auto G_at = [&](double s) {
    const std::size_t i = index_below(s);
    return G[i] + detail::adaptive_simpson(G_integrand, r[i], s, kRelTol * 1e-2);
  };
  auto g_at = [&](double s) {
    const double sc = std::min(s, out.R2);
    return 1.0 - 0.5 * out.c * G_at(sc);
  };
  auto f_integrand = [&](double s) { return phi_at(s) * g_at(s); };
  out.g.resize(M);
  out.f.assign(M, 0.0);
  for (std::size_t i = 0; i < M; ++i) out.g[i] = 1.0 - 0.5 * out.c * G[std::min(i, i_R2)];
  for (std::size_t i = 1; i < M; ++i) {
    out.f[i] = out.f[i - 1] +
               detail::adaptive_simpson(f_integrand, r[i - 1], r[i],
                                        kRelTol * std::max(1e-6, out.f[i - 1]));
  }

  // Structural sanity on the tabulation.
  for (std::size_t i = 1; i < M; ++i) {
    if (out.phi[i] > out.phi[i - 1] + 1e-12 || out.Phi[i] <= out.Phi[i - 1] ||
        out.f[i] <= out.f[i - 1]) {
      throw Error(Errc::QuadratureFailure, "tabulated profile not monotone");
    }
  }
  return out;
}

// Wasserstein decay bound: W1(t) <= exp((2 gamma - c sigma^2) t) * (2/phi(R1)) * w0.
inline double contraction_bound(const ContractionConstants& consts, double t, double w0) {
  if (t < 0.0 || w0 < 0.0) throw Error(Errc::DimensionMismatch, "t and w0 must be >= 0");
  return std::exp(consts.rate_bound() * t) * (2.0 / consts.phi_R1) * w0;
}

struct DecayReport {
  std::vector<double> times;
  std::vector<double> wbar1;
  std::vector<double> std_errors;
  std::vector<double> bound;
  double rate_fitted = 0.0;
  double rate_bound = 0.0;
  bool contractive = false;
  bool below_bound = true;

  void write_csv(const std::string& path) const {
    io::CsvWriter w(path, {"t", "wbar1", "bound"});
    for (std::size_t i = 0; i < times.size(); ++i) w.row({times[i], wbar1[i], bound[i]});
  }
};

// Synchronous coupling harness: two runs sharing every Brownian increment
// (identical seed and stream ids). Demonstrates decay toward the unique
// invariant measure; the reflection coupling itself is a proof device, so the
// measured curve is an upper-bound demonstration, not the coupled process of
// the theorem.
inline DecayReport empirical_decay(GameOracle& game,
                                   std::shared_ptr<const Environment> env,
                                   std::size_t n_particles, const InitializerSpec& init_a,
                                   const InitializerSpec& init_b, const RunConfig& cfg,
                                   const ContractionConstants& consts) {
  auto a = init_state(env, game.players(), n_particles, init_a, cfg.seed);
  auto b = init_state(env, game.players(), n_particles, init_b, cfg.seed);

  DecayReport rep;
  rep.rate_bound = consts.rate_bound();
  rep.contractive = consts.contractive();

  auto coupled_se = [&](const SystemState& x, const SystemState& y) {
    // Monte Carlo slack from the same-index pairing (the synchronous
    // coupling estimate of W1); approximate but honest about scale.
    double var_acc = 0.0;
    const std::size_t n = x.n_particles();
    for (std::size_t j = 0; j < x.n_env(); ++j) {
      double mean = 0.0, m2 = 0.0;
      std::size_t cnt = 0;
      for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.n_players(); ++i) {
          const auto xa = x.particle(i, j, k);
          const auto xb = y.particle(i, j, k);
          for (std::size_t q = 0; q < xa.size(); ++q) {
            s += (xa[q] - xb[q]) * (xa[q] - xb[q]);
          }
        }
        const double dist = std::sqrt(s);
        ++cnt;
        const double delta = dist - mean;
        mean += delta / static_cast<double>(cnt);
        m2 += delta * (dist - mean);
      }
      const double var = m2 / static_cast<double>(n > 1 ? n - 1 : 1);
      const double w = x.environment().weight(j);
      var_acc += w * w * var / static_cast<double>(n);
    }
    return std::sqrt(var_acc);
  };

  const double w0 = metrics::avg_wasserstein(a, b, 1);
  auto record = [&](double t) {
    const double w = metrics::avg_wasserstein(a, b, 1);
    rep.times.push_back(t);
    rep.wbar1.push_back(w);
    rep.std_errors.push_back(coupled_se(a, b));
    rep.bound.push_back(contraction_bound(consts, t, w0));
  };

  record(0.0);
  const std::size_t record_every = cfg.record_every == 0 ? 1 : cfg.record_every;
  for (std::size_t s = 0; s < cfg.n_steps; ++s) {
    mfl_step(a, game, cfg, s);
    mfl_step(b, game, cfg, s);
    if ((s + 1) % record_every == 0) record(a.time());
  }

  rep.below_bound = true;
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    if (rep.wbar1[i] > rep.bound[i] + 2.0 * rep.std_errors[i]) rep.below_bound = false;
  }

  // Exponential rate over the second half of the record.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t cnt = 0;
  for (std::size_t i = rep.times.size() / 2; i < rep.times.size(); ++i) {
    if (rep.wbar1[i] <= 1e-14) continue;
    const double x = rep.times[i];
    const double y = std::log(rep.wbar1[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt >= 2) {
    const double m = static_cast<double>(cnt);
    rep.rate_fitted = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  }
  return rep;
}

}  // namespace mfl
