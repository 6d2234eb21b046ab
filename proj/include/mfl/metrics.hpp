#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfl/assignment.hpp"
#include "mfl/errors.hpp"
#include "mfl/game.hpp"
#include "mfl/kde.hpp"
#include "mfl/rng.hpp"
#include "mfl/state.hpp"

namespace mfl {
namespace metrics {

inline constexpr std::size_t kExactAssignmentLimit = 512;

// 1-D p-Wasserstein distance between empirical laws via order statistics.
// Unequal counts are aligned on the mid-quantiles (k+1/2)/n of the larger
// count, each evaluated with the left-continuous empirical quantile.
inline double w_1d(std::vector<double> a, std::vector<double> b, int p) {
  if (a.empty() || b.empty()) throw Error(Errc::EmptySample, "w_1d on empty sample");
  if (p != 1 && p != 2) throw Error(Errc::DimensionMismatch, "p must be 1 or 2");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = std::max(a.size(), b.size());
  auto quantile = [](const std::vector<double>& s, double q) {
    std::size_t idx = static_cast<std::size_t>(q * static_cast<double>(s.size()));
    if (idx >= s.size()) idx = s.size() - 1;
    return s[idx];
  };
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double q = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    const double va = a.size() == n ? a[k] : quantile(a, q);
    const double vb = b.size() == n ? b[k] : quantile(b, q);
    const double d = std::abs(va - vb);
    acc += (p == 1) ? d : d * d;
  }
  acc /= static_cast<double>(n);
  return (p == 1) ? acc : std::sqrt(acc);
}

// Exact p-Wasserstein distance between two equal-size clouds in R^d by
// optimal assignment. Row-ordered cost recomputation keeps the result
// bit-identical to any solver that finds the same matching.
inline double w_exact(std::span<const double> cloud_a, std::span<const double> cloud_b,
                      std::size_t d, int p) {
  if (d == 0) throw Error(Errc::DimensionMismatch, "d must be >= 1");
  if (p != 1 && p != 2) throw Error(Errc::DimensionMismatch, "p must be 1 or 2");
  if (cloud_a.size() % d != 0 || cloud_b.size() % d != 0) {
    throw Error(Errc::DimensionMismatch, "cloud buffer not a multiple of d");
  }
  const std::size_t n = cloud_a.size() / d;
  if (n == 0) throw Error(Errc::EmptySample, "w_exact on empty cloud");
  if (cloud_b.size() / d != n) {
    throw Error(Errc::DimensionMismatch, "clouds must have equal particle counts");
  }
  if (n > kExactAssignmentLimit) {
    throw Error(Errc::TooManyParticles, "n > 512; use w_sliced");
  }

  std::vector<double> cost(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      double s = 0.0;
      for (std::size_t q = 0; q < d; ++q) {
        const double diff = cloud_a[k * d + q] - cloud_b[l * d + q];
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      cost[k * n + l] = (p == 1) ? dist : s;
    }
  }
  const auto match = detail::solve_assignment(cost, n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) total += cost[k * n + match[k]];
  total /= static_cast<double>(n);
  return (p == 1) ? total : std::sqrt(total);
}

// Sliced Wasserstein surrogate: mean over random unit directions of the 1-D
// distance between the projected clouds. Deterministic given the seed.
inline double w_sliced(std::span<const double> cloud_a, std::span<const double> cloud_b,
                       std::size_t d, int p, std::size_t n_projections,
                       std::uint64_t seed) {
  if (d == 0) throw Error(Errc::DimensionMismatch, "d must be >= 1");
  if (n_projections == 0) throw Error(Errc::EmptySample, "need at least one projection");
  const std::size_t na = cloud_a.size() / d;
  const std::size_t nb = cloud_b.size() / d;
  if (na == 0 || nb == 0) throw Error(Errc::EmptySample, "w_sliced on empty cloud");

  double acc = 0.0;
  std::vector<double> pa(na), pb(nb), u(d);
  for (std::size_t t = 0; t < n_projections; ++t) {
    RngStream stream(seed, RngDomain::Projection, 0, 0, static_cast<std::uint32_t>(t));
    double norm = 0.0;
    for (std::size_t q = 0; q < d; ++q) {
      u[q] = stream.normal(q);
      norm += u[q] * u[q];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      u[0] = 1.0;
      norm = 1.0;
    }
    for (std::size_t q = 0; q < d; ++q) u[q] /= norm;
    for (std::size_t k = 0; k < na; ++k) {
      double s = 0.0;
      for (std::size_t q = 0; q < d; ++q) s += cloud_a[k * d + q] * u[q];
      pa[k] = s;
    }
    for (std::size_t k = 0; k < nb; ++k) {
      double s = 0.0;
      for (std::size_t q = 0; q < d; ++q) s += cloud_b[k * d + q] * u[q];
      pb[k] = s;
    }
    acc += w_1d(pa, pb, p);
  }
  return acc / static_cast<double>(n_projections);
}

// Environment-averaged Wasserstein distance between two states:
// ( sum_j w_j W_p^p(conditional_a_j, conditional_b_j) )^(1/p), each
// conditional distance exact up to 512 particles and sliced beyond (64
// projections, fixed internal seed, so series are comparable across calls).
inline double avg_wasserstein(const SystemState& a, const SystemState& b, int p,
                              std::size_t n_projections = 64) {
  if (!a.environment().same_support(b.environment())) {
    throw Error(Errc::EnvironmentMismatch, "states live on different environments");
  }
  if (a.n_players() != b.n_players() || a.n_particles() != b.n_particles()) {
    throw Error(Errc::EnvironmentMismatch, "states have different player layout");
  }
  for (std::size_t i = 0; i < a.n_players(); ++i) {
    if (a.players()[i].dim != b.players()[i].dim) {
      throw Error(Errc::EnvironmentMismatch, "player dimensions differ");
    }
  }
  constexpr std::uint64_t kSlicedSeed = 0x5B1CEDull;
  double acc = 0.0;
  for (std::size_t j = 0; j < a.n_env(); ++j) {
    // The conditional law at j is the joint law of the stacked player vector.
    double dist = 0.0;
    if (a.n_players() == 1) {
      const std::size_t d = a.players()[0].dim;
      dist = (a.n_particles() <= kExactAssignmentLimit)
                 ? w_exact(a.cloud(0, j), b.cloud(0, j), d, p)
                 : (d == 1 ? w_1d(std::vector<double>(a.cloud(0, j).begin(), a.cloud(0, j).end()),
                                  std::vector<double>(b.cloud(0, j).begin(), b.cloud(0, j).end()), p)
                           : w_sliced(a.cloud(0, j), b.cloud(0, j), d, p, n_projections,
                                      kSlicedSeed));
    } else {
      std::size_t total_dim = 0;
      for (const auto& ps : a.players()) total_dim += ps.dim;
      std::vector<double> xa(a.n_particles() * total_dim), xb(xa.size());
      std::size_t off = 0;
      for (std::size_t i = 0; i < a.n_players(); ++i) {
        const std::size_t d = a.players()[i].dim;
        auto ca = a.cloud(i, j);
        auto cb = b.cloud(i, j);
        for (std::size_t k = 0; k < a.n_particles(); ++k) {
          for (std::size_t q = 0; q < d; ++q) {
            xa[k * total_dim + off + q] = ca[k * d + q];
            xb[k * total_dim + off + q] = cb[k * d + q];
          }
        }
        off += d;
      }
      dist = (a.n_particles() <= kExactAssignmentLimit)
                 ? w_exact(xa, xb, total_dim, p)
                 : w_sliced(xa, xb, total_dim, p, n_projections, kSlicedSeed);
    }
    acc += a.environment().weight(j) * ((p == 1) ? dist : dist * dist);
  }
  return (p == 1) ? acc : std::sqrt(acc);
}

// Leave-one-out Gaussian-KDE differential entropy (see kde::entropy).
inline double kde_entropy(std::span<const double> samples, std::size_t d,
                          std::optional<double> bandwidth = std::nullopt) {
  return kde::entropy(samples, d, bandwidth);
}

// Mean squared first-order-condition violation per player:
// sum_j w_j mean_k |drift(i, snap, x_k, y_j) + (sigma^2/2) score(x_k)|^2.
// Zero (up to estimator noise) exactly on the limit set.
inline std::vector<MetricReport> first_order_residual(const SystemState& state,
                                                      GameOracle& game, double sigma) {
  if (state.n_particles() < 100) {
    throw Error(Errc::EmptySample, "need >= 100 particles per cloud for score estimation");
  }
  const auto snap = snapshot(state);
  game.prepare(snap);
  const double half_sigma2 = 0.5 * sigma * sigma;

  std::vector<MetricReport> out;
  for (std::size_t i = 0; i < state.n_players(); ++i) {
    const std::size_t d = state.players()[i].dim;
    const std::size_t n = state.n_particles();
    double value = 0.0;
    double var_acc = 0.0;
    for (std::size_t j = 0; j < state.n_env(); ++j) {
      auto cloud = state.cloud(i, j);
      const auto sc = kde::score(cloud, d);
      std::vector<double> integrand(n, 0.0);
      std::vector<double> dr(d);
      for (std::size_t k = 0; k < n; ++k) {
        game.drift(i, snap, cloud.subspan(k * d, d), j, dr);
        double s = 0.0;
        for (std::size_t q = 0; q < d; ++q) {
          const double r = dr[q] + half_sigma2 * sc[k * d + q];
          s += r * r;
        }
        integrand[k] = s;
      }
      double mean = 0.0;
      for (double v : integrand) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : integrand) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n > 1 ? n - 1 : 1);
      const double w = state.environment().weight(j);
      value += w * mean;
      var_acc += w * w * var / static_cast<double>(n);
    }
    MetricReport rep;
    rep.name = "first_order_residual";
    rep.value = value;
    rep.std_error = std::sqrt(var_acc);
    rep.details.emplace_back("player", static_cast<double>(i));
    out.push_back(std::move(rep));
  }
  return out;
}

// Free energy estimate V = F + (sigma^2/2) H(. | Leb x m), with the relative
// entropy expressed through the KDE differential entropy of each conditional
// cloud (H_rel = -h). Reports energy and entropy parts separately; without an
// energy oracle the report degrades to the entropy part and is flagged.
inline MetricReport free_energy(const SystemState& state, GameOracle& game, double sigma) {
  const auto snap = snapshot(state);
  game.prepare(snap);
  const auto energy = game.energy(snap);

  double entropy_rel = 0.0;
  double entropy_var = 0.0;
  for (std::size_t i = 0; i < state.n_players(); ++i) {
    const std::size_t d = state.players()[i].dim;
    for (std::size_t j = 0; j < state.n_env(); ++j) {
      const double w = state.environment().weight(j);
      const double h = kde::entropy(state.cloud(i, j), d);
      const double se = kde::entropy_std_error(state.cloud(i, j), d);
      entropy_rel -= w * h;
      entropy_var += w * w * se * se;
    }
  }
  const double half_sigma2 = 0.5 * sigma * sigma;

  MetricReport rep;
  rep.name = "free_energy";
  rep.details.emplace_back("entropy_rel", entropy_rel);
  if (energy) {
    rep.value = energy->value + half_sigma2 * entropy_rel;
    double var = entropy_var * half_sigma2 * half_sigma2;
    if (energy->std_error) var += (*energy->std_error) * (*energy->std_error);
    rep.std_error = std::sqrt(var);
    rep.details.emplace_back("energy", energy->value);
  } else {
    rep.value = half_sigma2 * entropy_rel;
    rep.std_error = half_sigma2 * std::sqrt(entropy_var);
    rep.details.emplace_back("energy_unavailable", 1.0);
    rep.failed = false;
  }
  return rep;
}

}  // namespace metrics
}  // namespace mfl
