#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "mfl/config.hpp"

namespace mfl {

namespace detail {

inline std::unique_ptr<GameOracle> build_oracle(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::Quadratic:
      return std::make_unique<games::QuadraticOracle>(cfg.quadratic, cfg.players);
    case ExperimentKind::Dynamic:
      return std::make_unique<games::DynamicGameOracle>(
          cfg.dynamic, cfg.players,
          std::vector<std::shared_ptr<const games::DynamicCoefficients>>(cfg.players.size(),
                                                                         cfg.dynamic_lq),
          cfg.environment);
    case ExperimentKind::Contraction:
      if (!cfg.quadratic.stiffness.empty()) {
        return std::make_unique<games::QuadraticOracle>(cfg.quadratic, cfg.players);
      }
      throw Error(Errc::ConfigParseError,
                  "contraction experiments with a decay run need a 'game' block");
    case ExperimentKind::Gan:
      throw Error(Errc::ConfigParseError, "gan experiments have their own pipeline");
  }
  throw Error(Errc::ConfigParseError, "unreachable");
}

inline std::vector<MonitorSpec> build_monitors(const ExperimentConfig& cfg,
                                               std::shared_ptr<const SystemState> initial) {
  std::vector<MonitorSpec> out;
  for (const auto& name : cfg.monitors) {
    MonitorSpec m;
    if (name == "moment_q1") {
      m.kind = MonitorSpec::Kind::Moment;
      m.q = 1.0;
    } else if (name == "moment_q2") {
      m.kind = MonitorSpec::Kind::Moment;
      m.q = 2.0;
    } else if (name == "moment_q4") {
      m.kind = MonitorSpec::Kind::Moment;
      m.q = 4.0;
    } else if (name == "free_energy") {
      m.kind = MonitorSpec::Kind::FreeEnergy;
    } else if (name == "residual") {
      m.kind = MonitorSpec::Kind::Residual;
    } else if (name == "wasserstein_to_init") {
      m.kind = MonitorSpec::Kind::WassersteinToRef;
      m.p = 1;
      m.reference = initial;
    } else {
      throw Error(Errc::ConfigParseError, "unknown monitor '" + name + "'");
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline void write_diagnostics_csv(const Trajectory& traj, const std::string& path) {
  io::CsvWriter w(path, {"t", "metric", "player", "value", "std_error"});
  for (const auto& r : traj.records) {
    w.row(std::vector<std::string>{io::format_double(r.t), r.metric,
                                   std::to_string(r.player), io::format_double(r.value),
                                   r.std_error ? io::format_double(*r.std_error) : ""});
  }
}

inline void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::FileFormatError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace detail

struct ValidationReport {
  bool ok = false;
  std::string kind;
  std::size_t state_bytes = 0;
  std::size_t drift_evals_per_step = 0;
  std::size_t n_steps = 0;
  std::vector<std::string> notes;

  Json to_json() const {
    Json j;
    j["ok"] = ok;
    j["kind"] = kind;
    j["estimated_state_bytes"] = state_bytes;
    j["drift_evals_per_step"] = drift_evals_per_step;
    j["n_steps"] = n_steps;
    j["notes"] = notes;
    return j;
  }
};

// Schema check plus a dry run of oracle construction; no stepping.
inline ValidationReport validate(const ExperimentConfig& cfg) {
  ValidationReport rep;
  rep.kind = kind_name(cfg.kind);
  if (cfg.kind == ExperimentKind::Gan) {
    cfg.gan_cfg.validate();
    const std::size_t d = gan::particle_dim(cfg.gan_cfg.z_dim);
    rep.state_bytes = cfg.gan_cfg.n_particles * d * sizeof(double) * 2;
    rep.drift_evals_per_step = cfg.gan_cfg.n_particles;
    rep.n_steps = cfg.gan_cfg.n_steps;
    rep.notes.push_back("per-iteration MH chain of length " +
                        std::to_string(cfg.gan_cfg.n_gen_samples));
    rep.ok = true;
    return rep;
  }

  if (!cfg.environment) throw Error(Errc::ConfigParseError, "missing environment");
  if (cfg.players.empty()) throw Error(Errc::ConfigParseError, "missing players");
  auto oracle = detail::build_oracle(cfg);

  // Construct a tiny state to exercise shapes without paying the full cost.
  auto probe = init_state(cfg.environment, cfg.players, 2, PointInit{{0.0}}, cfg.seed);
  const auto snap = snapshot(probe);
  oracle->prepare(snap);
  std::size_t dims = 0;
  for (const auto& p : cfg.players) dims += p.dim;
  rep.state_bytes = cfg.n_particles * cfg.environment->size() * dims * sizeof(double) * 2;
  rep.drift_evals_per_step = cfg.n_particles * cfg.environment->size() * cfg.players.size();
  rep.n_steps = cfg.run.n_steps;
  if (cfg.kind == ExperimentKind::Contraction) {
    rep.notes.push_back("decay harness runs two coupled copies");
  }
  rep.ok = true;
  return rep;
}

// Executes the configured experiment and writes every artifact into the
// output directory. Refuses to reuse an existing directory unless the
// overwrite flag is set.
inline void run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  if (fs::exists(dir)) {
    if (!cfg.overwrite) {
      throw Error(Errc::FileFormatError,
                  "output directory exists (pass overwrite): " + cfg.output_dir);
    }
  } else {
    fs::create_directories(dir);
  }

  Json summary;
  summary["kind"] = kind_name(cfg.kind);
  summary["seed"] = cfg.seed;
  summary["run_hash"] = run_hash(cfg.echo);
  summary["config"] = cfg.echo;
  detail::write_json(cfg.echo, (dir / "config_echo.json").string());

  switch (cfg.kind) {
    case ExperimentKind::Quadratic:
    case ExperimentKind::Dynamic: {
      auto oracle = detail::build_oracle(cfg);
      auto state = init_state(cfg.environment, cfg.players, cfg.n_particles, cfg.init, cfg.seed);
      auto initial = std::make_shared<const SystemState>(state);
      const auto monitors = detail::build_monitors(cfg, initial);
      auto traj = run(std::move(state), *oracle, cfg.run, monitors);
      detail::write_diagnostics_csv(traj, (dir / "diagnostics.csv").string());
      traj.final_state.write_checkpoint(dir.string());
      if (cfg.kind == ExperimentKind::Dynamic && cfg.dynamic_dump_paths) {
        auto* dyn = dynamic_cast<games::DynamicGameOracle*>(oracle.get());
        const auto snap = snapshot(traj.final_state);
        dyn->prepare(snap);
        for (std::size_t i = 0; i < cfg.players.size(); ++i) {
          dyn->write_paths_csv((dir / ("paths_p" + std::to_string(i) + ".csv")).string(), i);
        }
      }
      summary["final_time"] = traj.final_state.time();
      summary["monitor_warnings"] = traj.monitor_warnings;
      for (const auto& name : {"moment_q2", "free_energy"}) {
        const auto series = traj.series(name);
        if (!series.empty()) summary[std::string("final_") + name] = series.back();
      }
      break;
    }
    case ExperimentKind::Gan: {
      const auto report = gan::train(cfg.gan_cfg);
      report.write_artifacts(dir.string(), cfg.gan_cfg.z_dim);
      summary["final_w1"] = report.final_w1;
      summary["iterations"] = report.rows.size() - 1;
      summary["final_train_error"] = report.rows.back().train_error;
      summary["final_acceptance"] = report.rows.back().acceptance;
      break;
    }
    case ExperimentKind::Contraction: {
      const auto consts_base = eberle_constants(cfg.kappa, cfg.run.sigma, cfg.grid);
      ContractionConstants consts = consts_base;
      consts.gamma = cfg.gamma;
      {
        io::CsvWriter w((dir / "constants_profile.csv").string(),
                        {"r", "phi", "Phi", "f", "g"});
        for (std::size_t i = 0; i < consts.r.size(); ++i) {
          w.row({consts.r[i], consts.phi[i], consts.Phi[i], consts.f[i], consts.g[i]});
        }
      }
      summary["R1"] = consts.R1;
      summary["R2"] = consts.R2;
      summary["c"] = consts.c;
      summary["phi_R1"] = consts.phi_R1;
      summary["rate_bound"] = consts.rate_bound();
      summary["contractive"] = consts.contractive();
      if (cfg.decay_init_a && cfg.decay_init_b) {
        auto oracle = detail::build_oracle(cfg);
        const auto rep = empirical_decay(*oracle, cfg.environment, cfg.n_particles,
                                         *cfg.decay_init_a, *cfg.decay_init_b, cfg.run, consts);
        rep.write_csv((dir / "decay.csv").string());
        summary["rate_fitted"] = rep.rate_fitted;
        summary["below_bound"] = rep.below_bound;
      }
      break;
    }
  }
  detail::write_json(summary, (dir / "summary.json").string());
}

}  // namespace mfl
