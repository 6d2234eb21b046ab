#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mfl/errors.hpp"
#include "mfl/game.hpp"
#include "mfl/metrics.hpp"
#include "mfl/parallel.hpp"
#include "mfl/rng.hpp"
#include "mfl/state.hpp"

namespace mfl {

struct RunConfig {
  double sigma = 1.0;
  double dt = 0.01;
  std::size_t n_steps = 1;
  std::size_t record_every = 1;
  std::uint64_t seed = 0;
  // Records a deep state copy into the trajectory every k-th record (0 = off).
  std::size_t record_state_every = 0;
};

// Abort threshold: a particle wandering past this radius means the (dt, game)
// pair is unstable; fail fast instead of overflowing.
inline constexpr double kBlowupRadius = 1e8;

struct TrajectoryRecord {
  double t = 0.0;
  std::string metric;
  int player = -1;  // -1: aggregate over players
  double value = 0.0;
  std::optional<double> std_error;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<TrajectoryRecord> records;
  std::vector<std::pair<double, SystemState>> checkpoints;
  SystemState final_state;
  std::size_t monitor_warnings = 0;

  // All recorded values of one metric in time order (aggregated player slot).
  std::vector<double> series(const std::string& metric, int player = -1) const {
    std::vector<double> out;
    for (const auto& r : records) {
      if (r.metric == metric && r.player == player) out.push_back(r.value);
    }
    return out;
  }
  std::vector<TrajectoryRecord> rows(const std::string& metric, int player = -1) const {
    std::vector<TrajectoryRecord> out;
    for (const auto& r : records) {
      if (r.metric == metric && r.player == player) out.push_back(r);
    }
    return out;
  }
};

// m-weighted q-th absolute moment of the stacked particle vector.
inline double moment(const SystemState& state, double q) {
  if (!(q > 0.0)) throw Error(Errc::DimensionMismatch, "moment order must be positive");
  const std::size_t n = state.n_particles();
  double acc = 0.0;
  for (std::size_t j = 0; j < state.n_env(); ++j) {
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < state.n_players(); ++i) {
        const auto x = state.particle(i, j, k);
        for (double v : x) s += v * v;
      }
      mean += std::pow(std::sqrt(s), q);
    }
    acc += state.environment().weight(j) * mean / static_cast<double>(n);
  }
  return acc;
}

// One Euler-Maruyama step of the mean-field Langevin system. All drift
// evaluations within the step see the snapshot taken at entry; the Brownian
// increment of particle (i, j, k) comes from its own counter-based stream, so
// the result is independent of the parallel schedule.
inline void mfl_step(SystemState& state, GameOracle& game, const RunConfig& cfg,
                     std::size_t step_index) {
  if (!(cfg.dt > 0.0)) throw Error(Errc::BadInitializerSpec, "dt must be positive");
  const StateSnapshot snap(state);
  game.prepare(snap);

  const double noise_scale = cfg.sigma * std::sqrt(cfg.dt);
  const std::size_t n = state.n_particles();
  const std::size_t J = state.n_env();

  for (std::size_t i = 0; i < state.n_players(); ++i) {
    const std::size_t d = state.players()[i].dim;
    std::vector<double> next(n * J * d);
    parallel_for(J * n, [&](std::size_t flat) {
      const std::size_t j = flat / n;
      const std::size_t k = flat % n;
      const auto x = snap.particle(i, j, k);
      double dr_buf[64];
      std::vector<double> dr_dyn;
      std::span<double> dr;
      if (d <= 64) {
        dr = std::span<double>(dr_buf, d);
      } else {
        dr_dyn.resize(d);
        dr = dr_dyn;
      }
      game.drift(i, snap, x, j, dr);
      RngStream stream(cfg.seed, RngDomain::Step, static_cast<std::uint32_t>(i),
                       static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k));
      const std::uint64_t base = static_cast<std::uint64_t>(step_index) * d;
      double norm2 = 0.0;
      for (std::size_t q = 0; q < d; ++q) {
        if (!std::isfinite(dr[q])) {
          throw Error(Errc::NonFiniteDrift, "player " + std::to_string(i) + ", env " +
                                                std::to_string(j) + ", particle " +
                                                std::to_string(k));
        }
        const double xi = noise_scale == 0.0 ? 0.0 : stream.normal(base + q);
        const double v = x[q] - dr[q] * cfg.dt + noise_scale * xi;
        next[(j * n + k) * d + q] = v;
        norm2 += v * v;
      }
      if (!(norm2 <= kBlowupRadius * kBlowupRadius)) {
        throw Error(Errc::NonFiniteState, "blow-up at player " + std::to_string(i) +
                                              ", env " + std::to_string(j) + ", particle " +
                                              std::to_string(k));
      }
    });
    for (std::size_t j = 0; j < J; ++j) {
      auto& cloud = state.mutable_cloud(i, j);
      std::copy(next.begin() + j * n * d, next.begin() + (j + 1) * n * d, cloud.begin());
    }
  }
  state.set_time(state.time() + cfg.dt);
}

struct MonitorSpec {
  enum class Kind { Moment, FreeEnergy, Residual, WassersteinToRef };
  Kind kind = Kind::Moment;
  double q = 2.0;                                  // Moment
  int p = 1;                                       // WassersteinToRef
  std::shared_ptr<const SystemState> reference;    // WassersteinToRef
};

namespace detail {

inline void evaluate_monitor(const MonitorSpec& m, const SystemState& state,
                             GameOracle& game, const RunConfig& cfg,
                             std::vector<TrajectoryRecord>& out) {
  const double t = state.time();
  switch (m.kind) {
    case MonitorSpec::Kind::Moment: {
      TrajectoryRecord r;
      r.t = t;
      r.metric = "moment_q" + io::format_double(m.q);
      r.value = moment(state, m.q);
      out.push_back(std::move(r));
      break;
    }
    case MonitorSpec::Kind::FreeEnergy: {
      const auto rep = metrics::free_energy(state, game, cfg.sigma);
      TrajectoryRecord r;
      r.t = t;
      r.metric = rep.name;
      r.value = rep.value;
      r.std_error = rep.std_error;
      out.push_back(std::move(r));
      for (const auto& [key, val] : rep.details) {
        TrajectoryRecord sub;
        sub.t = t;
        sub.metric = "free_energy." + key;
        sub.value = val;
        out.push_back(std::move(sub));
      }
      break;
    }
    case MonitorSpec::Kind::Residual: {
      const auto reps = metrics::first_order_residual(state, game, cfg.sigma);
      for (std::size_t i = 0; i < reps.size(); ++i) {
        TrajectoryRecord r;
        r.t = t;
        r.metric = reps[i].name;
        r.player = static_cast<int>(i);
        r.value = reps[i].value;
        r.std_error = reps[i].std_error;
        out.push_back(std::move(r));
      }
      break;
    }
    case MonitorSpec::Kind::WassersteinToRef: {
      if (!m.reference) throw Error(Errc::MonitorFailure, "missing reference state");
      TrajectoryRecord r;
      r.t = t;
      r.metric = "wasserstein_to_ref_p" + std::to_string(m.p);
      r.value = metrics::avg_wasserstein(state, *m.reference, m.p);
      out.push_back(std::move(r));
      break;
    }
  }
}

}  // namespace detail

// Advances the system cfg.n_steps times, evaluating each monitor every
// cfg.record_every steps (and at t = 0). Monitor failures are non-fatal: the
// value records as NaN and the warning count increments.
inline Trajectory run(SystemState state, GameOracle& game, const RunConfig& cfg,
                      const std::vector<MonitorSpec>& monitors = {}) {
  Trajectory traj;
  const std::size_t record_every = cfg.record_every == 0 ? 1 : cfg.record_every;

  std::size_t records_taken = 0;
  auto record = [&](const SystemState& s) {
    traj.times.push_back(s.time());
    for (const auto& m : monitors) {
      try {
        detail::evaluate_monitor(m, s, game, cfg, traj.records);
      } catch (const Error&) {
        TrajectoryRecord r;
        r.t = s.time();
        r.metric = "monitor_failure";
        r.value = std::numeric_limits<double>::quiet_NaN();
        traj.records.push_back(std::move(r));
        ++traj.monitor_warnings;
      }
    }
    ++records_taken;
    if (cfg.record_state_every != 0 && (records_taken - 1) % cfg.record_state_every == 0) {
      traj.checkpoints.emplace_back(s.time(), s);
    }
  };

  record(state);
  for (std::size_t s = 0; s < cfg.n_steps; ++s) {
    mfl_step(state, game, cfg, s);
    if ((s + 1) % record_every == 0) record(state);
  }
  traj.final_state = std::move(state);
  return traj;
}

}  // namespace mfl
