#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mfl/errors.hpp"
#include "mfl/fft.hpp"

namespace mfl {
namespace kde {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Silverman's per-dimension rule for a Gaussian product kernel.
inline double silverman_bandwidth(double stddev, std::size_t n, std::size_t d) {
  const double expo = 1.0 / (static_cast<double>(d) + 4.0);
  return stddev * std::pow(4.0 / (static_cast<double>(d) + 2.0), expo) *
         std::pow(static_cast<double>(n), -expo);
}

namespace detail_kde {

struct Columns {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<std::vector<double>> cols;
  std::vector<double> bandwidth;
};

inline Columns prepare(std::span<const double> samples, std::size_t d,
                       std::optional<double> bandwidth) {
  if (d == 0) throw Error(Errc::DimensionMismatch, "dimension must be >= 1");
  if (samples.size() % d != 0) throw Error(Errc::DimensionMismatch, "sample buffer not a multiple of d");
  Columns c;
  c.n = samples.size() / d;
  c.d = d;
  if (c.n < 10) throw Error(Errc::EmptySample, "need at least 10 samples");
  c.cols.resize(d);
  c.bandwidth.resize(d);
  for (std::size_t q = 0; q < d; ++q) {
    auto& col = c.cols[q];
    col.resize(c.n);
    double mean = 0.0;
    for (std::size_t k = 0; k < c.n; ++k) {
      col[k] = samples[k * d + q];
      mean += col[k];
    }
    mean /= static_cast<double>(c.n);
    double var = 0.0;
    for (double x : col) var += (x - mean) * (x - mean);
    var /= static_cast<double>(c.n - 1);
    if (bandwidth) {
      c.bandwidth[q] = *bandwidth;
    } else {
      if (!(var > 0.0)) {
        throw Error(Errc::DegenerateSample, "zero variance in coordinate " + std::to_string(q));
      }
      c.bandwidth[q] = silverman_bandwidth(std::sqrt(var), c.n, d);
    }
    if (!(c.bandwidth[q] > 0.0)) {
      throw Error(Errc::DegenerateSample, "non-positive bandwidth");
    }
  }
  return c;
}

// Binned kernel sums on a regular grid (d=1): for each sample location x_k
// returns S0_k = sum_l K_h(x_k - x_l) and S1_k = sum_l K_h'(x_k - x_l),
// including the self term. Linear binning both ways keeps O(n + G log G).
// Samples whose neighbours all sit beyond the truncated kernel are flagged
// and carry exact log-space leave-one-out values instead (the linear sums
// underflow there but the log still matters for the entropy).
struct GridSums {
  std::vector<double> s0;
  std::vector<double> s1;
  std::vector<char> exact;
  std::vector<double> log_loo;    // valid where exact[k] != 0 (excludes self, unnormalized by n-1)
  std::vector<double> loo_score;  // valid where exact[k] != 0
};

inline GridSums grid_kernel_sums(const std::vector<double>& x, double h, bool want_s1) {
  const std::size_t n = x.size();
  auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  const double pad = 8.0 * h;
  const double lo = *mn_it - pad;
  const double hi = *mx_it + pad;
  std::size_t grid = 1 << 15;
  const double width = hi - lo;
  double delta = width / static_cast<double>(grid - 1);
  // Keep several grid cells per bandwidth even for tight supports.
  while (delta > h / 8.0 && grid < (1u << 21)) {
    grid <<= 1;
    delta = width / static_cast<double>(grid - 1);
  }

  std::vector<double> counts(grid, 0.0);
  std::vector<std::size_t> cell(n);
  std::vector<double> frac(n);
  for (std::size_t k = 0; k < n; ++k) {
    double pos = (x[k] - lo) / delta;
    std::size_t c = static_cast<std::size_t>(pos);
    if (c >= grid - 1) c = grid - 2;
    const double f = pos - static_cast<double>(c);
    counts[c] += 1.0 - f;
    counts[c + 1] += f;
    cell[k] = c;
    frac[k] = f;
  }

  const std::size_t half = static_cast<std::size_t>(std::ceil(8.0 * h / delta));
  const double norm = 1.0 / (std::sqrt(kTwoPi) * h);
  std::vector<double> k0(2 * half + 1);
  for (std::size_t m = 0; m < k0.size(); ++m) {
    const double u = (static_cast<double>(m) - static_cast<double>(half)) * delta / h;
    k0[m] = norm * std::exp(-0.5 * u * u);
  }
  GridSums out;
  const auto dens = detail::convolve_symmetric(counts, k0);
  out.s0.resize(n);
  auto interp = [&](const std::vector<double>& g, std::size_t k) {
    return g[cell[k]] * (1.0 - frac[k]) + g[cell[k] + 1] * frac[k];
  };
  for (std::size_t k = 0; k < n; ++k) out.s0[k] = interp(dens, k);

  if (want_s1) {
    std::vector<double> k1(2 * half + 1);
    for (std::size_t m = 0; m < k1.size(); ++m) {
      const double r = (static_cast<double>(m) - static_cast<double>(half)) * delta;
      k1[m] = -(r / (h * h)) * k0[m];
    }
    const auto dder = detail::convolve_symmetric(counts, k1);
    out.s1.resize(n);
    for (std::size_t k = 0; k < n; ++k) out.s1[k] = interp(dder, k);
  }

  // Isolated samples (all neighbours beyond the truncated kernel) would read
  // zero off the grid; recompute them exactly in log space.
  out.exact.assign(n, 0);
  out.log_loo.assign(n, 0.0);
  out.loo_score.assign(n, 0.0);
  const double floor = norm * (std::exp(-0.5 * 7.0 * 7.0) + 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (out.s0[k] > floor) continue;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < n; ++l) {
      if (l == k) continue;
      const double u = (x[k] - x[l]) / h;
      peak = std::max(peak, -0.5 * u * u);
    }
    double acc = 0.0, acc_score = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      if (l == k) continue;
      const double u = (x[k] - x[l]) / h;
      const double e = -0.5 * u * u - peak;
      if (e < -700.0) continue;
      const double w = std::exp(e);
      acc += w;
      acc_score += -(x[k] - x[l]) / (h * h) * w;
    }
    out.exact[k] = 1;
    out.log_loo[k] = std::log(norm) + peak + std::log(acc);
    out.loo_score[k] = acc_score / acc;
  }
  return out;
}

// Direct product-kernel sums for d >= 2 (O(n^2 d)).
inline void direct_kernel_sums(const Columns& c, std::vector<double>& s0,
                               std::vector<double>& grad, bool want_grad) {
  const std::size_t n = c.n;
  const std::size_t d = c.d;
  double norm = 1.0;
  for (std::size_t q = 0; q < d; ++q) norm /= std::sqrt(kTwoPi) * c.bandwidth[q];
  s0.assign(n, 0.0);
  if (want_grad) grad.assign(n * d, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      double e = 0.0;
      for (std::size_t q = 0; q < d; ++q) {
        const double u = (c.cols[q][k] - c.cols[q][l]) / c.bandwidth[q];
        e += u * u;
      }
      const double w = norm * std::exp(-0.5 * e);
      acc += w;
      if (want_grad) {
        for (std::size_t q = 0; q < d; ++q) {
          grad[k * d + q] -= w * (c.cols[q][k] - c.cols[q][l]) /
                            (c.bandwidth[q] * c.bandwidth[q]);
        }
      }
    }
    s0[k] = acc;
  }
}

}  // namespace detail_kde

namespace detail_kde {

// Per-sample leave-one-out log density ln p_{-k}(x_k) at bandwidths scaled
// by `factor`.
inline std::vector<double> loo_log_terms(const Columns& c, double factor) {
  const std::size_t n = c.n;
  const std::size_t d = c.d;
  Columns scaled = c;
  for (auto& h : scaled.bandwidth) h *= factor;
  double self = 1.0;
  for (std::size_t q = 0; q < d; ++q) self /= std::sqrt(kTwoPi) * scaled.bandwidth[q];

  std::vector<double> terms(n);
  const double log_nm1 = std::log(static_cast<double>(n - 1));
  if (d == 1) {
    const auto sums = grid_kernel_sums(scaled.cols[0], scaled.bandwidth[0], false);
    for (std::size_t k = 0; k < n; ++k) {
      if (sums.exact[k]) {
        terms[k] = sums.log_loo[k] - log_nm1;
        continue;
      }
      double loo = (sums.s0[k] - self) / static_cast<double>(n - 1);
      if (!(loo > 0.0)) loo = 1e-300;
      terms[k] = std::log(loo);
    }
    return terms;
  }
  std::vector<double> s0, unused;
  direct_kernel_sums(scaled, s0, unused, false);
  for (std::size_t k = 0; k < n; ++k) {
    double loo = (s0[k] - self) / static_cast<double>(n - 1);
    if (!(loo > 0.0)) loo = 1e-300;
    terms[k] = std::log(loo);
  }
  return terms;
}

// Combined per-sample entropy terms: two-point Richardson extrapolation in
// the bandwidth, -(2 ln p_h - ln p_{2h}), which cancels the O(h) bias a hard
// support boundary induces while leaving smooth targets essentially exact.
inline std::vector<double> entropy_terms(std::span<const double> samples, std::size_t d,
                                         std::optional<double> bandwidth) {
  const auto c = prepare(samples, d, bandwidth);
  const auto t1 = loo_log_terms(c, 1.0);
  const auto t2 = loo_log_terms(c, 2.0);
  std::vector<double> out(c.n);
  for (std::size_t k = 0; k < c.n; ++k) out[k] = -(2.0 * t1[k] - t2[k]);
  return out;
}

}  // namespace detail_kde

// Leave-one-out differential entropy estimate with a Gaussian product kernel
// (Silverman bandwidth h by default), bias-reduced by Richardson
// extrapolation across bandwidths h and 2h. samples: n*d row-major.
inline double entropy(std::span<const double> samples, std::size_t d,
                      std::optional<double> bandwidth = std::nullopt) {
  const auto terms = detail_kde::entropy_terms(samples, d, bandwidth);
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc / static_cast<double>(terms.size());
}

// Standard error of the entropy estimate (sd of the per-sample terms).
inline double entropy_std_error(std::span<const double> samples, std::size_t d,
                                std::optional<double> bandwidth = std::nullopt) {
  const auto terms = detail_kde::entropy_terms(samples, d, bandwidth);
  const std::size_t n = terms.size();
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double delta = terms[k] - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (terms[k] - mean);
  }
  const double var = m2 / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

// Leave-one-out kernel score estimate of grad log density at every sample,
// same bandwidth policy as entropy(). Output: n*d row-major.
inline std::vector<double> score(std::span<const double> samples, std::size_t d,
                                 std::optional<double> bandwidth = std::nullopt) {
  detail_kde::Columns c;
  try {
    c = detail_kde::prepare(samples, d, bandwidth);
  } catch (const Error& e) {
    if (e.code() == Errc::DegenerateSample || e.code() == Errc::EmptySample) {
      throw Error(Errc::ScoreEstimationFailure, e.what());
    }
    throw;
  }
  const std::size_t n = c.n;
  std::vector<double> out(n * d, 0.0);
  double self = 1.0;
  for (std::size_t q = 0; q < d; ++q) self /= std::sqrt(kTwoPi) * c.bandwidth[q];

  if (d == 1) {
    const auto sums = detail_kde::grid_kernel_sums(c.cols[0], c.bandwidth[0], true);
    for (std::size_t k = 0; k < n; ++k) {
      if (sums.exact[k]) {
        out[k] = sums.loo_score[k];
        continue;
      }
      const double den = sums.s0[k] - self;  // K'(0) = 0, so s1 needs no correction
      if (!(den > 0.0)) throw Error(Errc::ScoreEstimationFailure, "vanishing density at sample");
      out[k] = sums.s1[k] / den;
    }
    return out;
  }

  std::vector<double> s0, grad;
  detail_kde::direct_kernel_sums(c, s0, grad, true);
  for (std::size_t k = 0; k < n; ++k) {
    const double den = s0[k] - self;
    if (!(den > 0.0)) throw Error(Errc::ScoreEstimationFailure, "vanishing density at sample");
    for (std::size_t q = 0; q < d; ++q) out[k * d + q] = grad[k * d + q] / den;
  }
  return out;
}

}  // namespace kde
}  // namespace mfl
