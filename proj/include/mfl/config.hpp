#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfl/contraction.hpp"
#include "mfl/environment.hpp"
#include "mfl/errors.hpp"
#include "mfl/games/dynamic.hpp"
#include "mfl/games/quadratic.hpp"
#include "mfl/gan.hpp"
#include "mfl/integrator.hpp"
#include "mfl/state.hpp"

namespace mfl {

using Json = nlohmann::json;

enum class ExperimentKind { Quadratic, Dynamic, Gan, Contraction };

inline const char* kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Quadratic: return "quadratic";
    case ExperimentKind::Dynamic: return "dynamic";
    case ExperimentKind::Gan: return "gan";
    case ExperimentKind::Contraction: return "contraction";
  }
  return "?";
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Quadratic;
  std::string output_dir = "out";
  bool overwrite = false;
  std::uint64_t seed = 0;
  RunConfig run;

  std::shared_ptr<const Environment> environment;
  std::vector<PlayerSpec> players;
  std::size_t n_particles = 1000;
  InitializerSpec init = GaussianInit{0.0, 1.0};
  std::vector<std::string> monitors;

  games::QuadraticGameSpec quadratic;
  games::DynamicGameSpec dynamic;
  std::shared_ptr<games::LqCoefficients> dynamic_lq;
  bool dynamic_dump_paths = false;

  gan::GanConfig gan_cfg;

  KappaProfile kappa = KappaProfile::constant(-1.0);
  double gamma = 0.0;
  GridSpec grid;
  std::optional<InitializerSpec> decay_init_a;
  std::optional<InitializerSpec> decay_init_b;

  Json echo;  // the parsed, normalized configuration (with overrides applied)
};

namespace detail {

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigParseError, "field '" + key + "': " + e.what());
  }
}

template <typename T>
T require(const Json& j, const std::string& key, const std::string& context) {
  if (!j.contains(key)) {
    throw Error(Errc::ConfigParseError, "missing field '" + key + "' in " + context);
  }
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigParseError, "field '" + key + "': " + e.what());
  }
}

inline InitializerSpec parse_init(const Json& j, const std::string& context) {
  const auto type = require<std::string>(j, "type", context);
  if (type == "gaussian") {
    return GaussianInit{get_or(j, "mean", 0.0), get_or(j, "std", 1.0)};
  }
  if (type == "uniform") {
    return UniformInit{get_or(j, "lo", 0.0), get_or(j, "hi", 1.0)};
  }
  if (type == "point") {
    return PointInit{get_or(j, "x", std::vector<double>{0.0})};
  }
  if (type == "file") {
    return FileInit{require<std::string>(j, "path", context)};
  }
  throw Error(Errc::ConfigParseError, "unknown initializer type '" + type + "'");
}

inline std::shared_ptr<const Environment> parse_environment(const Json& j) {
  const auto type = require<std::string>(j, "type", "environment");
  if (type == "single_point") {
    return std::make_shared<Environment>(Environment::single_point(get_or(j, "y", 0.0)));
  }
  if (type == "uniform_grid") {
    return std::make_shared<Environment>(Environment::uniform_grid(
        get_or(j, "lo", 0.0), get_or(j, "hi", 1.0),
        require<std::size_t>(j, "n", "environment")));
  }
  if (type == "integer_grid") {
    return std::make_shared<Environment>(
        Environment::integer_grid(require<std::size_t>(j, "T", "environment")));
  }
  if (type == "points") {
    return std::make_shared<Environment>(
        make_environment(require<std::vector<std::vector<double>>>(j, "points", "environment"),
                         require<std::vector<double>>(j, "weights", "environment")));
  }
  if (type == "file") {
    return std::make_shared<Environment>(
        Environment::from_file(require<std::string>(j, "path", "environment")));
  }
  throw Error(Errc::ConfigParseError, "unknown environment type '" + type + "'");
}

inline KappaProfile parse_kappa(const Json& j) {
  const auto family = require<std::string>(j, "family", "kappa");
  if (family == "constant") {
    return KappaProfile::constant(require<double>(j, "value", "kappa"));
  }
  if (family == "piecewise_linear") {
    const auto knots = require<std::vector<std::vector<double>>>(j, "knots", "kappa");
    std::vector<std::pair<double, double>> pairs;
    for (const auto& k : knots) {
      if (k.size() != 2) throw Error(Errc::ConfigParseError, "kappa knots must be [r, value]");
      pairs.emplace_back(k[0], k[1]);
    }
    return KappaProfile::piecewise_linear(std::move(pairs));
  }
  if (family == "quadratic_well") {
    return KappaProfile::quadratic_well(require<double>(j, "a", "kappa"),
                                        require<double>(j, "b", "kappa"));
  }
  throw Error(Errc::ConfigParseError, "unknown kappa family '" + family + "'");
}

inline gan::DataSpec parse_data(const Json& j) {
  const auto type = require<std::string>(j, "type", "data");
  if (type == "exponential") return gan::ExponentialData{get_or(j, "rate", 1.0)};
  if (type == "gaussian") {
    return gan::GaussianData{get_or(j, "mean", 0.0), get_or(j, "std", 1.0)};
  }
  if (type == "file") return gan::FileData{require<std::string>(j, "path", "data")};
  throw Error(Errc::ConfigParseError, "unknown data type '" + type + "'");
}

inline std::vector<double> require_matrix(const Json& j, const std::string& key,
                                          std::size_t rows, std::size_t cols,
                                          std::vector<double> fallback) {
  if (!j.contains(key)) return fallback;
  const auto m = require<std::vector<std::vector<double>>>(j, key, "lq");
  if (m.size() != rows) {
    throw Error(Errc::ConfigParseError, "matrix '" + key + "' needs " + std::to_string(rows) +
                                            " rows");
  }
  std::vector<double> flat;
  for (const auto& row : m) {
    if (row.size() != cols) {
      throw Error(Errc::ConfigParseError,
                  "matrix '" + key + "' needs " + std::to_string(cols) + " columns");
    }
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return flat;
}

}  // namespace detail

// Parses and normalizes a configuration file. Overrides (seed, output dir)
// are applied before the echo is formed, so the echo plus nothing else
// reproduces the run.
inline ExperimentConfig parse_config(const std::string& path,
                                     std::optional<std::uint64_t> seed_override = {},
                                     std::optional<std::string> out_override = {},
                                     bool overwrite_override = false) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigParseError, "cannot open config file " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(Errc::ConfigParseError, std::string("invalid JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  const auto kind = detail::require<std::string>(j, "kind", "config");
  if (kind == "quadratic") {
    cfg.kind = ExperimentKind::Quadratic;
  } else if (kind == "dynamic") {
    cfg.kind = ExperimentKind::Dynamic;
  } else if (kind == "gan") {
    cfg.kind = ExperimentKind::Gan;
  } else if (kind == "contraction") {
    cfg.kind = ExperimentKind::Contraction;
  } else {
    throw Error(Errc::ConfigParseError, "unknown kind '" + kind + "'");
  }

  // Exactly one kind-specific block.
  for (const char* block : {"quadratic", "dynamic", "gan", "contraction"}) {
    if (j.contains(block) && block != kind) {
      throw Error(Errc::ConfigParseError,
                  std::string("config has block '") + block + "' but kind is '" + kind + "'");
    }
  }
  if (!j.contains(kind)) {
    throw Error(Errc::ConfigParseError, "missing the '" + kind + "' block");
  }

  cfg.output_dir = detail::get_or<std::string>(j, "output_dir", "out");
  cfg.overwrite = detail::get_or(j, "overwrite", false);
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
  if (seed_override) cfg.seed = *seed_override;
  if (out_override) cfg.output_dir = *out_override;
  cfg.overwrite = cfg.overwrite || overwrite_override;

  if (j.contains("run")) {
    const auto& r = j.at("run");
    cfg.run.sigma = detail::get_or(r, "sigma", 1.0);
    cfg.run.dt = detail::get_or(r, "dt", 0.01);
    cfg.run.n_steps = detail::get_or<std::size_t>(r, "n_steps", 1);
    cfg.run.record_every = detail::get_or<std::size_t>(r, "record_every", 1);
    if (!(cfg.run.sigma > 0.0)) throw Error(Errc::ConfigParseError, "run.sigma must be > 0");
    if (!(cfg.run.dt > 0.0)) throw Error(Errc::ConfigParseError, "run.dt must be > 0");
    if (cfg.run.n_steps < 1) throw Error(Errc::ConfigParseError, "run.n_steps must be >= 1");
  }
  cfg.run.seed = cfg.seed;

  if (j.contains("environment")) cfg.environment = detail::parse_environment(j.at("environment"));
  if (j.contains("players")) {
    for (const auto& p : j.at("players")) {
      cfg.players.push_back(PlayerSpec{detail::require<std::size_t>(p, "dim", "players")});
    }
  }
  cfg.n_particles = detail::get_or<std::size_t>(j, "n_particles", 1000);
  if (j.contains("init")) cfg.init = detail::parse_init(j.at("init"), "init");
  cfg.monitors = detail::get_or<std::vector<std::string>>(
      j, "monitors", {"moment_q2", "free_energy"});

  switch (cfg.kind) {
    case ExperimentKind::Quadratic: {
      const auto& q = j.at("quadratic");
      cfg.quadratic.stiffness = detail::require<std::vector<double>>(q, "stiffness", "quadratic");
      cfg.quadratic.coupling = detail::get_or<std::vector<std::vector<double>>>(
          q, "coupling",
          std::vector<std::vector<double>>(cfg.quadratic.stiffness.size(),
                                           std::vector<double>(cfg.quadratic.stiffness.size(), 0.0)));
      cfg.quadratic.g0 = detail::get_or(q, "g0", 1.0);
      cfg.quadratic.g1 = detail::get_or(q, "g1", 0.0);
      cfg.quadratic.zero_sum = detail::get_or(q, "zero_sum", false);
      if (!cfg.environment) {
        cfg.environment = std::make_shared<Environment>(Environment::single_point(0.0));
      }
      if (cfg.players.empty()) {
        cfg.players.assign(cfg.quadratic.stiffness.size(), PlayerSpec{1});
      }
      break;
    }
    case ExperimentKind::Dynamic: {
      const auto& dj = j.at("dynamic");
      cfg.dynamic.horizon = detail::get_or(dj, "horizon", 1.0);
      cfg.dynamic.theta_dim = detail::get_or<std::size_t>(dj, "theta_dim", 1);
      cfg.dynamic.theta0 =
          detail::get_or(dj, "theta0", std::vector<double>(cfg.dynamic.theta_dim, 0.0));
      const auto scheme = detail::get_or<std::string>(dj, "scheme", "rk4");
      if (scheme == "rk4") {
        cfg.dynamic.scheme = games::DynScheme::Rk4Continuous;
      } else if (scheme == "discrete") {
        cfg.dynamic.scheme = games::DynScheme::EulerDiscrete;
      } else {
        throw Error(Errc::ConfigParseError, "unknown dynamic scheme '" + scheme + "'");
      }
      cfg.dynamic_dump_paths = detail::get_or(dj, "dump_paths", false);
      if (cfg.players.empty()) cfg.players.assign(1, PlayerSpec{1});
      if (!cfg.environment) {
        throw Error(Errc::ConfigParseError, "dynamic experiments need an environment block");
      }
      const std::size_t dt = cfg.dynamic.theta_dim;
      const std::size_t dx = cfg.players[0].dim;
      auto lq = std::make_shared<games::LqCoefficients>(dt, dx);
      const auto& lj = dj.contains("lq") ? dj.at("lq") : Json::object();
      lq->a_theta = detail::require_matrix(lj, "a_theta", dt, dt, lq->a_theta);
      lq->b_x = detail::require_matrix(lj, "b_x", dt, dx, lq->b_x);
      lq->b0 = detail::get_or(lj, "b0", lq->b0);
      lq->q_x = detail::require_matrix(lj, "q_x", dx, dx, lq->q_x);
      lq->q_theta = detail::require_matrix(lj, "q_theta", dt, dt, lq->q_theta);
      lq->g_term = detail::require_matrix(lj, "g_term", dt, dt, lq->g_term);
      cfg.dynamic_lq = lq;
      break;
    }
    case ExperimentKind::Gan: {
      const auto& g = j.at("gan");
      cfg.gan_cfg.sigma = detail::get_or(g, "sigma", 0.4);
      cfg.gan_cfg.lambda = detail::get_or(g, "lambda", 0.2);
      cfg.gan_cfg.dt = detail::get_or(g, "dt", 0.01);
      cfg.gan_cfg.n_steps = detail::get_or<std::size_t>(g, "n_steps", 60);
      cfg.gan_cfg.n_particles = detail::get_or<std::size_t>(g, "n_particles", 3000);
      cfg.gan_cfg.z_dim = detail::get_or<std::size_t>(g, "z_dim", 1);
      if (g.contains("data")) cfg.gan_cfg.data = detail::parse_data(g.at("data"));
      cfg.gan_cfg.n_gen_samples = detail::get_or<std::size_t>(g, "n_gen_samples", 20000);
      cfg.gan_cfg.n_data_samples = detail::get_or<std::size_t>(g, "n_data_samples", 20000);
      cfg.gan_cfg.n_chains = detail::get_or<std::size_t>(g, "n_chains", 4);
      if (g.contains("mh")) {
        const auto& m = g.at("mh");
        cfg.gan_cfg.mh.initial_step = detail::get_or(m, "initial_step", 1.0);
        cfg.gan_cfg.mh.target_accept = detail::get_or(m, "target_accept", 0.0);
        cfg.gan_cfg.mh.burn_in_fraction = detail::get_or(m, "burn_in_fraction", 0.2);
        cfg.gan_cfg.mh.thin = detail::get_or<std::size_t>(m, "thin", 1);
        cfg.gan_cfg.mh.init = detail::get_or(m, "init", std::vector<double>{});
      }
      cfg.gan_cfg.seed = cfg.seed;
      cfg.gan_cfg.validate();
      break;
    }
    case ExperimentKind::Contraction: {
      const auto& c = j.at("contraction");
      cfg.kappa = detail::parse_kappa(detail::require<Json>(c, "kappa", "contraction"));
      cfg.gamma = detail::get_or(c, "gamma", 0.0);
      if (c.contains("grid")) {
        cfg.grid.r_max = detail::get_or(c.at("grid"), "r_max", 0.0);
        cfg.grid.n_points = detail::get_or<std::size_t>(c.at("grid"), "n_points", 4096);
      }
      if (c.contains("init_a")) cfg.decay_init_a = detail::parse_init(c.at("init_a"), "init_a");
      if (c.contains("init_b")) cfg.decay_init_b = detail::parse_init(c.at("init_b"), "init_b");
      if (c.contains("game")) {
        const auto& q = c.at("game");
        cfg.quadratic.stiffness = detail::require<std::vector<double>>(q, "stiffness", "game");
        cfg.quadratic.coupling = detail::get_or<std::vector<std::vector<double>>>(
            q, "coupling",
            std::vector<std::vector<double>>(cfg.quadratic.stiffness.size(),
                                             std::vector<double>(cfg.quadratic.stiffness.size(), 0.0)));
        cfg.quadratic.g0 = detail::get_or(q, "g0", 1.0);
        cfg.quadratic.g1 = detail::get_or(q, "g1", 0.0);
        cfg.quadratic.zero_sum = detail::get_or(q, "zero_sum", false);
        if (cfg.players.empty()) {
          cfg.players.assign(cfg.quadratic.stiffness.size(), PlayerSpec{1});
        }
      }
      if (!cfg.environment) {
        cfg.environment = std::make_shared<Environment>(Environment::single_point(0.0));
      }
      break;
    }
  }

  // Normalized echo: the parsed tree with overrides folded in.
  cfg.echo = j;
  cfg.echo["seed"] = cfg.seed;
  cfg.echo["output_dir"] = cfg.output_dir;
  cfg.echo["overwrite"] = cfg.overwrite;
  return cfg;
}

// FNV-1a over the canonical echo: a stable run identifier.
inline std::string run_hash(const Json& echo) {
  const std::string bytes = echo.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace mfl
