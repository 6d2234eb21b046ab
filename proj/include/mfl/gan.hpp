#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mfl/errors.hpp"
#include "mfl/game.hpp"
#include "mfl/integrator.hpp"
#include "mfl/kde.hpp"
#include "mfl/metrics.hpp"
#include "mfl/parallel.hpp"
#include "mfl/rng.hpp"
#include "mfl/state.hpp"

namespace mfl::gan {

// Discriminator particle layout: x = (C, A[0..z_dim-1], b) in R^{z_dim+2}.
inline constexpr std::size_t particle_dim(std::size_t z_dim) { return z_dim + 2; }

// phi(X, z) = C (A.z + b)^+
inline double relu_feature(std::span<const double> x, std::span<const double> z) {
  const std::size_t zd = z.size();
  if (x.size() != particle_dim(zd)) {
    throw Error(Errc::DimensionMismatch, "particle is not (C, A, b) for this z");
  }
  double act = x[zd + 1];
  for (std::size_t q = 0; q < zd; ++q) act += x[1 + q] * z[q];
  return act > 0.0 ? x[0] * act : 0.0;
}

// Gradient of phi in X = (C, A, b); the kink subgradient is fixed to 0.
inline void relu_feature_grad(std::span<const double> x, std::span<const double> z,
                              std::span<double> out) {
  const std::size_t zd = z.size();
  double act = x[zd + 1];
  for (std::size_t q = 0; q < zd; ++q) act += x[1 + q] * z[q];
  if (act > 0.0) {
    out[0] = act;
    for (std::size_t q = 0; q < zd; ++q) out[1 + q] = x[0] * z[q];
    out[zd + 1] = x[0];
  } else {
    for (std::size_t q = 0; q < particle_dim(zd); ++q) out[q] = 0.0;
  }
}

namespace detail {

// Piecewise-linear form of z -> mean_k phi(x_k, z) for scalar z: thresholds
// t_k = -b_k/A_k sorted with prefix sums, so each evaluation is O(log n).
// The strict activation A z + b > 0 matches the zero kink subgradient.
struct FeatureMean1d {
  // Particles with A > 0, active for z > t; sorted by t ascending.
  std::vector<double> t_pos, ca_pos, cb_pos;  // prefix sums of C*A, C*b
  // Particles with A < 0, active for z < t; sorted by t ascending.
  std::vector<double> t_neg, ca_neg, cb_neg;  // suffix sums
  double const_term = 0.0;  // A == 0, b > 0 contribute C*b always
  double inv_n = 0.0;

  static FeatureMean1d build(std::span<const double> cloud) {
    const std::size_t n = cloud.size() / 3;
    if (n == 0) throw Error(Errc::EmptySampleSet, "empty discriminator cloud");
    FeatureMean1d f;
    f.inv_n = 1.0 / static_cast<double>(n);
    std::vector<std::pair<double, std::pair<double, double>>> pos, neg;
    for (std::size_t k = 0; k < n; ++k) {
      const double C = cloud[k * 3 + 0];
      const double A = cloud[k * 3 + 1];
      const double b = cloud[k * 3 + 2];
      if (A > 0.0) {
        pos.push_back({-b / A, {C * A, C * b}});
      } else if (A < 0.0) {
        neg.push_back({-b / A, {C * A, C * b}});
      } else if (b > 0.0) {
        f.const_term += C * b;
      }
    }
    std::sort(pos.begin(), pos.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::sort(neg.begin(), neg.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    f.t_pos.reserve(pos.size());
    f.ca_pos.assign(pos.size() + 1, 0.0);
    f.cb_pos.assign(pos.size() + 1, 0.0);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      f.t_pos.push_back(pos[i].first);
      f.ca_pos[i + 1] = f.ca_pos[i] + pos[i].second.first;
      f.cb_pos[i + 1] = f.cb_pos[i] + pos[i].second.second;
    }
    f.t_neg.reserve(neg.size());
    f.ca_neg.assign(neg.size() + 1, 0.0);
    f.cb_neg.assign(neg.size() + 1, 0.0);
    for (std::size_t i = neg.size(); i-- > 0;) {
      f.ca_neg[i] = f.ca_neg[i + 1] + neg[i].second.first;
      f.cb_neg[i] = f.cb_neg[i + 1] + neg[i].second.second;
    }
    for (const auto& e : neg) f.t_neg.push_back(e.first);
    return f;
  }

  double operator()(double z) const {
    double acc = const_term;
    // A > 0 particles active when t < z (strict).
    {
      const auto it = std::lower_bound(t_pos.begin(), t_pos.end(), z);
      const std::size_t idx = static_cast<std::size_t>(it - t_pos.begin());
      acc += ca_pos[idx] * z + cb_pos[idx];
    }
    // A < 0 particles active when z < t (strict).
    {
      const auto it = std::upper_bound(t_neg.begin(), t_neg.end(), z);
      const std::size_t idx = static_cast<std::size_t>(it - t_neg.begin());
      acc += ca_neg[idx] * z + cb_neg[idx];
    }
    return acc * inv_n;
  }
};

// Sorted-sample view with prefix sums; serves mean_z grad_x phi(x, z) in
// O(log n) for scalar z.
struct SampleMoments1d {
  std::vector<double> z;       // sorted
  std::vector<double> prefix;  // prefix[i] = sum of z[0..i)
  double inv_n = 0.0;

  static SampleMoments1d build(std::vector<double> samples) {
    if (samples.empty()) throw Error(Errc::EmptySampleSet, "empty sample set");
    SampleMoments1d s;
    std::sort(samples.begin(), samples.end());
    s.inv_n = 1.0 / static_cast<double>(samples.size());
    s.prefix.assign(samples.size() + 1, 0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) s.prefix[i + 1] = s.prefix[i] + samples[i];
    s.z = std::move(samples);
    return s;
  }

  // (count, sum z) over the active set of particle (A, b).
  void active_stats(double A, double b, double& count, double& zsum) const {
    if (A > 0.0) {
      const double t = -b / A;
      const auto it = std::upper_bound(z.begin(), z.end(), t);  // z > t strict
      const std::size_t idx = static_cast<std::size_t>(it - z.begin());
      count = static_cast<double>(z.size() - idx);
      zsum = prefix.back() - prefix[idx];
    } else if (A < 0.0) {
      const double t = -b / A;
      const auto it = std::lower_bound(z.begin(), z.end(), t);  // z < t strict
      const std::size_t idx = static_cast<std::size_t>(it - z.begin());
      count = static_cast<double>(idx);
      zsum = prefix[idx];
    } else if (b > 0.0) {
      count = static_cast<double>(z.size());
      zsum = prefix.back();
    } else {
      count = 0.0;
      zsum = 0.0;
    }
  }

  // mean over samples of grad_x phi(x, z), x = (C, A, b).
  void mean_grad(std::span<const double> x, std::span<double> out) const {
    double count = 0.0, zsum = 0.0;
    active_stats(x[1], x[2], count, zsum);
    out[0] = (x[1] * zsum + x[2] * count) * inv_n;  // mean (A z + b)^+
    out[1] = x[0] * zsum * inv_n;                   // mean C z 1{..}
    out[2] = x[0] * count * inv_n;                  // mean C 1{..}
  }
};

}  // namespace detail

// Unnormalized log density of the explicit generator best response:
// log mu*[nu](z) + log C = -(2/sigma^2)(mean_k phi(x_k, z) + (lambda/2)|z|^2).
inline double generator_logdensity(std::span<const double> cloud, std::size_t z_dim,
                                   std::span<const double> z, double sigma, double lambda) {
  const std::size_t d = particle_dim(z_dim);
  const std::size_t n = cloud.size() / d;
  if (n == 0) throw Error(Errc::EmptySampleSet, "empty discriminator cloud");
  double mean_phi = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean_phi += relu_feature(cloud.subspan(k * d, d), z);
  mean_phi /= static_cast<double>(n);
  double z2 = 0.0;
  for (double v : z) z2 += v * v;
  return -(2.0 / (sigma * sigma)) * (mean_phi + 0.5 * lambda * z2);
}

struct MhSettings {
  double initial_step = 1.0;
  double target_accept = 0.0;  // 0: 0.44 in 1-D, 0.234 otherwise
  double burn_in_fraction = 0.2;
  std::size_t thin = 1;
  std::vector<double> init;  // empty: origin
};

struct MhResult {
  std::vector<double> samples;  // kept draws, row-major n x z_dim
  double acceptance_rate = 0.0;
  double final_step = 1.0;
};

// Random-walk Metropolis with Gaussian proposals; the step size adapts toward
// the optimal-scaling acceptance target during burn-in and is frozen after.
inline MhResult mh_sample(const std::function<double(std::span<const double>)>& logdensity,
                          std::size_t n, std::size_t z_dim, const MhSettings& settings,
                          std::uint64_t seed, std::uint32_t chain = 0,
                          std::uint32_t tag = 0) {
  if (n == 0) throw Error(Errc::EmptySample, "chain length must be >= 1");
  if (z_dim == 0) throw Error(Errc::DimensionMismatch, "z_dim must be >= 1");
  const double target =
      settings.target_accept > 0.0 ? settings.target_accept : (z_dim == 1 ? 0.44 : 0.234);

  std::vector<double> z(z_dim, 0.0);
  if (!settings.init.empty()) {
    if (settings.init.size() != z_dim) {
      throw Error(Errc::DimensionMismatch, "mh init point has wrong dimension");
    }
    z = settings.init;
  }
  double lp = logdensity(z);
  if (!std::isfinite(lp)) {
    throw Error(Errc::NonFiniteLogDensity, "log density not finite at the chain start");
  }

  // Proposal normals and acceptance uniforms come from separate streams: one
  // stream must serve a single variate kind (Box-Muller consumes the whole
  // counter block, so mixing kinds on one stream correlates the draws).
  const RngStream proposal_stream(seed, RngDomain::Metropolis, chain, tag, 0);
  const RngStream accept_stream(seed, RngDomain::Metropolis, chain, tag, 1);
  const std::size_t burn = static_cast<std::size_t>(
      std::floor(settings.burn_in_fraction * static_cast<double>(n)));
  double step = settings.initial_step;
  if (!(step > 0.0)) throw Error(Errc::BadInitializerSpec, "mh initial step must be positive");

  MhResult out;
  out.samples.reserve((n - burn) * z_dim);
  std::vector<double> prop(z_dim);
  std::size_t accepted_tail = 0, tail = 0;
  std::size_t batch_accepts = 0, batch_size = 0, batch_index = 0;
  constexpr std::size_t kBatch = 50;

  for (std::size_t it = 0; it < n; ++it) {
    for (std::size_t q = 0; q < z_dim; ++q) {
      prop[q] = z[q] + step * proposal_stream.normal(it * z_dim + q);
    }
    const double lq = logdensity(prop);
    if (std::isnan(lq) || lq == std::numeric_limits<double>::infinity()) {
      throw Error(Errc::NonFiniteLogDensity, "log density returned NaN/+inf");
    }
    const bool accept = lq >= lp || std::log(accept_stream.uniform(it)) < lq - lp;
    if (accept) {
      z = prop;
      lp = lq;
    }

    if (it < burn) {
      ++batch_size;
      batch_accepts += accept;
      if (batch_size == kBatch) {
        ++batch_index;
        const double rate = static_cast<double>(batch_accepts) / static_cast<double>(kBatch);
        step *= std::exp((rate - target) / std::sqrt(static_cast<double>(batch_index)));
        batch_size = 0;
        batch_accepts = 0;
      }
    } else {
      ++tail;
      accepted_tail += accept;
      if ((it - burn) % settings.thin == 0) {
        out.samples.insert(out.samples.end(), z.begin(), z.end());
      }
    }
  }
  out.acceptance_rate =
      tail == 0 ? 0.0 : static_cast<double>(accepted_tail) / static_cast<double>(tail);
  out.final_step = step;
  return out;
}

// Pooled independent chains (fixed split, so results do not depend on the
// worker count); each chain discards its own burn-in.
inline MhResult mh_sample_pooled(
    const std::function<double(std::span<const double>)>& logdensity, std::size_t n_total,
    std::size_t n_chains, std::size_t z_dim, const MhSettings& settings, std::uint64_t seed,
    std::uint32_t tag = 0) {
  if (n_chains == 0) n_chains = 1;
  std::vector<MhResult> results(n_chains);
  std::vector<std::size_t> lengths(n_chains, n_total / n_chains);
  lengths[0] += n_total % n_chains;
  parallel_tasks(n_chains, [&](std::size_t c) {
    results[c] = mh_sample(logdensity, lengths[c], z_dim, settings, seed,
                           static_cast<std::uint32_t>(c), tag);
  });
  MhResult pooled;
  double acc = 0.0;
  std::size_t total_kept = 0;
  for (const auto& r : results) {
    pooled.samples.insert(pooled.samples.end(), r.samples.begin(), r.samples.end());
    acc += r.acceptance_rate * static_cast<double>(r.samples.size());
    total_kept += r.samples.size();
  }
  pooled.acceptance_rate = total_kept == 0 ? 0.0 : acc / static_cast<double>(total_kept);
  pooled.final_step = results[0].final_step;
  return pooled;
}

// Monte Carlo gradient of the discriminator potential at particle x:
//   -[mean_gen grad phi - mean_data grad phi] + lambda x.
inline std::vector<double> discriminator_grad(std::span<const double> x, std::size_t z_dim,
                                              std::span<const double> gen_samples,
                                              std::span<const double> data_samples,
                                              double lambda) {
  if (gen_samples.empty() || data_samples.empty()) {
    throw Error(Errc::EmptySampleSet, "need generator and data samples");
  }
  const std::size_t d = particle_dim(z_dim);
  std::vector<double> out(d), tmp(d), acc_gen(d, 0.0), acc_data(d, 0.0);
  const std::size_t ng = gen_samples.size() / z_dim;
  const std::size_t nd = data_samples.size() / z_dim;
  for (std::size_t s = 0; s < ng; ++s) {
    relu_feature_grad(x, gen_samples.subspan(s * z_dim, z_dim), tmp);
    for (std::size_t q = 0; q < d; ++q) acc_gen[q] += tmp[q];
  }
  for (std::size_t s = 0; s < nd; ++s) {
    relu_feature_grad(x, data_samples.subspan(s * z_dim, z_dim), tmp);
    for (std::size_t q = 0; q < d; ++q) acc_data[q] += tmp[q];
  }
  for (std::size_t q = 0; q < d; ++q) {
    out[q] = -(acc_gen[q] / static_cast<double>(ng) - acc_data[q] / static_cast<double>(nd)) +
             lambda * x[q];
  }
  return out;
}

// log of the generator normalization constant C(nu) for scalar z, by
// trapezoid quadrature of the unnormalized density on a grid truncated where
// it falls below 1e-12 of its peak.
inline double log_normalization(const std::function<double(double)>& logdens_1d) {
  double zmax = 2.0;
  auto scan_peak = [&](double Z) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 512; ++i) {
      const double z = -Z + 2.0 * Z * static_cast<double>(i) / 512.0;
      best = std::max(best, logdens_1d(z));
    }
    return best;
  };
  double peak = scan_peak(zmax);
  for (int grow = 0; grow < 60; ++grow) {
    if (logdens_1d(-zmax) < peak - 40.0 && logdens_1d(zmax) < peak - 40.0) break;
    zmax *= 2.0;
    peak = std::max(peak, scan_peak(zmax));
  }
  // Trim to the region above peak - ln(1e12).
  const double cut = peak - std::log(1e12);
  double lo = -zmax, hi = zmax;
  while (hi - lo > 1e-9 * zmax) {
    const double mid = 0.5 * (lo + hi);
    (logdens_1d(mid) >= cut ? hi : lo) = mid;
  }
  const double z_lo = lo;
  lo = -zmax;
  hi = zmax;
  while (hi - lo > 1e-9 * zmax) {
    const double mid = 0.5 * (lo + hi);
    (logdens_1d(mid) >= cut ? lo : hi) = mid;
  }
  const double z_hi = hi;
  if (!(z_hi > z_lo)) throw Error(Errc::QuadratureFailure, "degenerate generator support");

  const std::size_t N = 4096;
  const double h = (z_hi - z_lo) / static_cast<double>(N);
  double acc = 0.5 * (std::exp(logdens_1d(z_lo) - peak) + std::exp(logdens_1d(z_hi) - peak));
  for (std::size_t i = 1; i < N; ++i) {
    acc += std::exp(logdens_1d(z_lo + h * static_cast<double>(i)) - peak);
  }
  const double log_Z = peak + std::log(acc * h);
  if (!std::isfinite(log_Z)) throw Error(Errc::QuadratureFailure, "normalization diverged");
  return -log_Z;  // log C = -log integral
}

// Training error: the paper-side potential Phi(nu) = V(nu, mu*[nu]) minus its
// (sigma^2/2) H(nu) term, estimated with the current generator samples:
//   -(mean_gen E_phi - mean_data E_phi) - (lambda/2)(mean_gen |z|^2 - E|X|^2)
//   - (sigma^2/2) H_rel(mu*),
// with H_rel(mu*) = log C + (2/sigma^2) mean_gen(E_phi + (lambda/2)|z|^2)
// computed by quadrature (z_dim = 1). The generator-sample terms cancel
// algebraically; keeping them makes the estimator mirror the definition.
inline MetricReport training_error(std::span<const double> cloud, std::size_t z_dim,
                                   std::span<const double> gen_samples,
                                   std::span<const double> data_samples, double sigma,
                                   double lambda,
                                   std::optional<double> data_feature_mean = std::nullopt) {
  if (gen_samples.empty() || data_samples.empty()) {
    throw Error(Errc::EmptySampleSet, "need generator and data samples");
  }
  const std::size_t d = particle_dim(z_dim);
  const std::size_t n = cloud.size() / d;
  const std::size_t ng = gen_samples.size() / z_dim;
  const std::size_t nd = data_samples.size() / z_dim;

  MetricReport rep;
  rep.name = "training_error";

  double cloud_m2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t q = 0; q < d; ++q) {
      cloud_m2 += cloud[k * d + q] * cloud[k * d + q];
    }
  }
  cloud_m2 /= static_cast<double>(n);

  double mean_gen_phi = 0.0, mean_gen_z2 = 0.0, mean_data_phi = 0.0;
  double data_var_acc = 0.0;
  detail::FeatureMean1d fm;
  if (z_dim == 1) {
    fm = detail::FeatureMean1d::build(cloud);
    for (std::size_t s = 0; s < ng; ++s) {
      const double z = gen_samples[s];
      mean_gen_phi += fm(z);
      mean_gen_z2 += z * z;
    }
    double mean = 0.0, m2 = 0.0;
    for (std::size_t s = 0; s < nd; ++s) {
      const double v = fm(data_samples[s]);
      mean_data_phi += v;
      const double delta = v - mean;
      mean += delta / static_cast<double>(s + 1);
      m2 += delta * (v - mean);
    }
    data_var_acc = m2 / static_cast<double>(nd > 1 ? nd - 1 : 1);
  } else {
    for (std::size_t s = 0; s < ng; ++s) {
      auto z = gen_samples.subspan(s * z_dim, z_dim);
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += relu_feature(cloud.subspan(k * d, d), z);
      mean_gen_phi += acc / static_cast<double>(n);
      for (double v : z) mean_gen_z2 += v * v;
    }
    double mean = 0.0, m2 = 0.0;
    for (std::size_t s = 0; s < nd; ++s) {
      auto z = data_samples.subspan(s * z_dim, z_dim);
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += relu_feature(cloud.subspan(k * d, d), z);
      acc /= static_cast<double>(n);
      mean_data_phi += acc;
      const double delta = acc - mean;
      mean += delta / static_cast<double>(s + 1);
      m2 += delta * (acc - mean);
    }
    data_var_acc = m2 / static_cast<double>(nd > 1 ? nd - 1 : 1);
  }
  mean_gen_phi /= static_cast<double>(ng);
  mean_gen_z2 /= static_cast<double>(ng);
  mean_data_phi /= static_cast<double>(nd);
  if (data_feature_mean) {
    // Rao-Blackwellized data term: the exact expectation replaces the sample
    // mean, removing the only Monte Carlo noise this estimator carries.
    mean_data_phi = *data_feature_mean;
    data_var_acc = 0.0;
  }

  double value = -(mean_gen_phi - mean_data_phi) -
                 0.5 * lambda * (mean_gen_z2 - cloud_m2);
  rep.details.emplace_back("mean_gen_feature", mean_gen_phi);
  rep.details.emplace_back("mean_data_feature", mean_data_phi);
  rep.details.emplace_back("cloud_m2", cloud_m2);

  if (z_dim == 1) {
    const double s2 = sigma * sigma;
    const auto ld = [&](double z) { return -(2.0 / s2) * (fm(z) + 0.5 * lambda * z * z); };
    const double log_C = log_normalization(ld);
    const double h_rel =
        log_C - (2.0 / s2) * (mean_gen_phi + 0.5 * lambda * mean_gen_z2);
    value -= 0.5 * s2 * h_rel;
    rep.details.emplace_back("log_C", log_C);
    rep.details.emplace_back("entropy_rel_gen", h_rel);
  } else {
    rep.details.emplace_back("entropy_term_skipped", 1.0);
    rep.failed = true;  // partial value, flagged
  }
  rep.value = value;
  rep.std_error = std::sqrt(data_var_acc / static_cast<double>(nd));
  return rep;
}

struct ExponentialData {
  double rate = 1.0;
};
struct GaussianData {
  double mean = 0.0;
  double std = 1.0;
};
struct FileData {
  std::string path;
};
using DataSpec = std::variant<ExponentialData, GaussianData, FileData>;

// Closed-form E_data[(A z + b)^+] for the named scalar data laws; the exact
// expectation behind the Monte Carlo data term of the training error.
inline std::optional<double> relu_moment(const DataSpec& data, double A, double b) {
  if (const auto* e = std::get_if<ExponentialData>(&data)) {
    const double r = e->rate;
    if (A == 0.0) return b > 0.0 ? b : 0.0;
    const double t = -b / A;
    if (A > 0.0) {
      if (t <= 0.0) return A / r + b;
      return (A / r) * std::exp(-r * t);
    }
    if (t <= 0.0) return 0.0;
    return A / r + b - (A / r) * std::exp(-r * t);
  }
  if (const auto* g = std::get_if<GaussianData>(&data)) {
    const double u = A * g->mean + b;
    const double v = std::abs(A) * g->std;
    if (v == 0.0) return u > 0.0 ? u : 0.0;
    const double a = u / v;
    const double cdf = 0.5 * std::erfc(-a / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * a * a) / std::sqrt(kde::kTwoPi);
    return u * cdf + v * pdf;
  }
  return std::nullopt;
}

// mean_k C_k E_data[(A_k z + b_k)^+], exact for named data laws (z_dim = 1).
inline std::optional<double> exact_data_feature_mean(std::span<const double> cloud,
                                                     std::size_t z_dim, const DataSpec& data) {
  if (z_dim != 1) return std::nullopt;
  const std::size_t n = cloud.size() / 3;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto m = relu_moment(data, cloud[k * 3 + 1], cloud[k * 3 + 2]);
    if (!m) return std::nullopt;
    acc += cloud[k * 3 + 0] * *m;
  }
  return acc / static_cast<double>(n);
}

struct GanConfig {
  double sigma = 0.4;
  double lambda = 0.2;
  double dt = 0.01;
  std::size_t n_steps = 60;
  std::size_t n_particles = 3000;
  std::size_t z_dim = 1;
  DataSpec data = ExponentialData{1.0};
  std::size_t n_gen_samples = 20000;
  std::size_t n_data_samples = 20000;
  std::size_t n_chains = 4;
  MhSettings mh;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma > 0.0) || !(lambda > 0.0) || !(dt > 0.0)) {
      throw Error(Errc::BadInitializerSpec, "sigma, lambda, dt must be positive");
    }
    if (n_particles == 0 || z_dim == 0 || n_gen_samples == 0 || n_data_samples == 0) {
      throw Error(Errc::BadInitializerSpec, "counts must be >= 1");
    }
  }
};

struct GanIterationRow {
  std::size_t iter = 0;
  double train_error = 0.0;
  double train_error_with_entropy = 0.0;
  double acceptance = 0.0;
  double w1_to_data = 0.0;
};

struct GanRunReport {
  std::vector<GanIterationRow> rows;
  std::vector<double> initial_gen_samples;
  std::vector<double> final_gen_samples;
  SystemState final_state;
  double final_w1 = 0.0;

  void write_artifacts(const std::string& dir, std::size_t z_dim) const {
    {
      io::CsvWriter w(dir + "/error_curve.csv",
                      {"iter", "train_error", "train_error_with_entropy", "acceptance",
                       "w1_to_data"});
      for (const auto& r : rows) {
        w.row({static_cast<double>(r.iter), r.train_error, r.train_error_with_entropy,
               r.acceptance, r.w1_to_data});
      }
    }
    {
      std::vector<std::string> header;
      for (std::size_t q = 0; q < z_dim; ++q) header.push_back("z" + std::to_string(q));
      io::CsvWriter w(dir + "/generated_samples.csv", header);
      for (std::size_t s = 0; s < final_gen_samples.size() / z_dim; ++s) {
        w.row(std::vector<double>(final_gen_samples.begin() + s * z_dim,
                                  final_gen_samples.begin() + (s + 1) * z_dim));
      }
    }
    {
      std::vector<std::string> header = {"C"};
      for (std::size_t q = 0; q < z_dim; ++q) header.push_back("A" + std::to_string(q));
      header.push_back("b");
      io::CsvWriter w(dir + "/discriminator_cloud.csv", header);
      const std::size_t d = particle_dim(z_dim);
      auto cloud = final_state.cloud(0, 0);
      for (std::size_t k = 0; k < final_state.n_particles(); ++k) {
        w.row(std::vector<double>(cloud.begin() + k * d, cloud.begin() + (k + 1) * d));
      }
    }
  }
};

namespace detail {

// Oracle for the discriminator's Langevin descent; drift is the Monte Carlo
// gradient against the samples drawn for the current iteration.
class DiscriminatorOracle : public GameOracle {
 public:
  DiscriminatorOracle(std::size_t z_dim, double lambda)
      : z_dim_(z_dim), lambda_(lambda), players_{{particle_dim(z_dim)}} {}

  const std::vector<PlayerSpec>& players() const override { return players_; }

  void set_samples(std::vector<double> gen, std::vector<double> data) {
    if (z_dim_ == 1) {
      gen_1d_ = SampleMoments1d::build(gen);
      data_1d_ = SampleMoments1d::build(data);
    }
    gen_ = std::move(gen);
    data_ = std::move(data);
  }

  void drift(std::size_t, const StateSnapshot&, std::span<const double> x, std::size_t,
             std::span<double> out) const override {
    if (z_dim_ == 1) {
      double g[3], dgrad[3];
      gen_1d_.mean_grad(x, g);
      data_1d_.mean_grad(x, dgrad);
      for (std::size_t q = 0; q < 3; ++q) {
        out[q] = -(g[q] - dgrad[q]) + lambda_ * x[q];
      }
      return;
    }
    const auto grad = discriminator_grad(x, z_dim_, gen_, data_, lambda_);
    for (std::size_t q = 0; q < grad.size(); ++q) out[q] = grad[q];
  }

 private:
  std::size_t z_dim_;
  double lambda_;
  std::vector<PlayerSpec> players_;
  std::vector<double> gen_, data_;
  SampleMoments1d gen_1d_, data_1d_;
};

inline std::vector<double> draw_data(const DataSpec& spec, std::size_t n, std::size_t z_dim,
                                     std::uint64_t seed, std::uint32_t iter) {
  std::vector<double> out(n * z_dim);
  if (const auto* f = std::get_if<FileData>(&spec)) {
    auto table = io::read_csv(f->path);
    if (table.header.size() != z_dim || table.rows.size() < n) {
      throw Error(Errc::FileFormatError, "data file too small or wrong dimension");
    }
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t q = 0; q < z_dim; ++q) out[s * z_dim + q] = table.rows[s][q];
    }
    return out;
  }
  RngStream stream(seed, RngDomain::Data, 0, iter, 0);
  if (const auto* e = std::get_if<ExponentialData>(&spec)) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = -std::log(stream.uniform(i)) / e->rate;
    }
  } else if (const auto* g = std::get_if<GaussianData>(&spec)) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = g->mean + g->std * stream.normal(i);
    }
  }
  return out;
}

// Cheap closed-form gate: the sampler must reproduce standard Gaussian
// moments before any training run.
inline void mh_self_test(const MhSettings& settings, std::uint64_t seed) {
  auto logdens = [](std::span<const double> z) { return -0.5 * z[0] * z[0]; };
  MhSettings s = settings;
  s.init.clear();
  const auto res = mh_sample(logdens, 20000, 1, s, seed ^ 0x5e1f7e57ull, 0, 0xFFFF);
  const std::size_t n = res.samples.size();
  double mean = 0.0, m2 = 0.0;
  for (double v : res.samples) mean += v;
  mean /= static_cast<double>(n);
  for (double v : res.samples) m2 += (v - mean) * (v - mean);
  m2 /= static_cast<double>(n);
  if (std::abs(mean) > 0.08 || std::abs(m2 - 1.0) > 0.15) {
    throw Error(Errc::BadInitializerSpec, "MH self-test failed on the Gaussian gate");
  }
}

}  // namespace detail

// MCMC-GAN training loop: per iteration, sample the explicit Gibbs generator
// best response by Metropolis-Hastings against the current discriminator
// cloud, record diagnostics of the pre-step state, then advance every
// discriminator particle one Euler-Maruyama step of the potential descent.
inline GanRunReport train(const GanConfig& cfg) {
  cfg.validate();
  detail::mh_self_test(cfg.mh, cfg.seed);

  auto env = std::make_shared<Environment>(Environment::single_point(0.0));
  const std::size_t d = particle_dim(cfg.z_dim);
  auto state = init_state(env, {PlayerSpec{d}}, cfg.n_particles, GaussianInit{0.0, 1.0},
                          cfg.seed);

  detail::DiscriminatorOracle oracle(cfg.z_dim, cfg.lambda);
  RunConfig step_cfg;
  step_cfg.sigma = cfg.sigma;
  step_cfg.dt = cfg.dt;
  step_cfg.seed = cfg.seed;

  GanRunReport report;
  const double s2 = cfg.sigma * cfg.sigma;

  for (std::size_t t = 0; t <= cfg.n_steps; ++t) {
    const auto cloud_span = state.cloud(0, 0);
    const std::vector<double> cloud(cloud_span.begin(), cloud_span.end());

    std::function<double(std::span<const double>)> logdens;
    detail::FeatureMean1d fm;
    if (cfg.z_dim == 1) {
      fm = detail::FeatureMean1d::build(cloud);
      logdens = [&fm, &cfg](std::span<const double> z) {
        return -(2.0 / (cfg.sigma * cfg.sigma)) *
               (fm(z[0]) + 0.5 * cfg.lambda * z[0] * z[0]);
      };
    } else {
      logdens = [&cloud, &cfg](std::span<const double> z) {
        return generator_logdensity(cloud, cfg.z_dim, z, cfg.sigma, cfg.lambda);
      };
    }

    const auto mh = mh_sample_pooled(logdens, cfg.n_gen_samples, cfg.n_chains, cfg.z_dim,
                                     cfg.mh, cfg.seed, static_cast<std::uint32_t>(t));
    const auto data = detail::draw_data(cfg.data, cfg.n_data_samples, cfg.z_dim, cfg.seed,
                                        static_cast<std::uint32_t>(t));

    GanIterationRow row;
    row.iter = t;
    row.acceptance = mh.acceptance_rate;
    const auto err = training_error(cloud, cfg.z_dim, mh.samples, data, cfg.sigma, cfg.lambda,
                                    exact_data_feature_mean(cloud, cfg.z_dim, cfg.data));
    row.train_error = err.value;
    row.train_error_with_entropy =
        err.value - 0.5 * s2 * metrics::kde_entropy(cloud, d);
    row.w1_to_data =
        cfg.z_dim == 1
            ? metrics::w_1d(mh.samples, data, 1)
            : metrics::w_sliced(mh.samples, data, cfg.z_dim, 1, 64, cfg.seed ^ 0x51ull);
    report.rows.push_back(row);

    if (t == 0) report.initial_gen_samples = mh.samples;
    if (t == cfg.n_steps) {
      report.final_gen_samples = mh.samples;
      report.final_w1 = row.w1_to_data;
      break;
    }

    oracle.set_samples(mh.samples, data);
    mfl_step(state, oracle, step_cfg, t);
  }
  report.final_state = std::move(state);
  return report;
}

}  // namespace mfl::gan
