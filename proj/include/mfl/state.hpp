#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mfl/environment.hpp"
#include "mfl/errors.hpp"
#include "mfl/io.hpp"
#include "mfl/rng.hpp"

namespace mfl {

struct PlayerSpec {
  std::size_t dim = 1;
};

namespace detail {

// All particle clouds of one system. clouds[i*J + j] is an n_particles x dim_i
// row-major block: the conditional law of player i given environment point j.
struct StateData {
  std::vector<std::vector<double>> clouds;
};

inline std::uint64_t next_snapshot_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

}  // namespace detail

class StateSnapshot;

// Joint particle system: particle k at environment j is the stacked vector
// (x^1_{jk}, ..., x^n_{jk}). Cloud storage is shared copy-on-write so
// snapshots stay frozen while the state advances.
class SystemState {
 public:
  SystemState() = default;
  SystemState(std::shared_ptr<const Environment> env, std::vector<PlayerSpec> players,
              std::size_t n_particles)
      : env_(std::move(env)),
        players_(std::move(players)),
        n_particles_(n_particles),
        data_(std::make_shared<detail::StateData>()) {
    if (players_.empty()) throw Error(Errc::BadInitializerSpec, "no players");
    if (n_particles_ == 0) throw Error(Errc::BadInitializerSpec, "n_particles must be >= 1");
    for (const auto& p : players_) {
      if (p.dim == 0) throw Error(Errc::BadInitializerSpec, "player dim must be >= 1");
    }
    data_->clouds.resize(players_.size() * env_->size());
    for (std::size_t i = 0; i < players_.size(); ++i) {
      for (std::size_t j = 0; j < env_->size(); ++j) {
        data_->clouds[i * env_->size() + j].assign(n_particles_ * players_[i].dim, 0.0);
      }
    }
  }

  const Environment& environment() const { return *env_; }
  std::shared_ptr<const Environment> environment_ptr() const { return env_; }
  const std::vector<PlayerSpec>& players() const { return players_; }
  std::size_t n_players() const { return players_.size(); }
  std::size_t n_env() const { return env_->size(); }
  std::size_t n_particles() const { return n_particles_; }
  double time() const { return time_; }
  void set_time(double t) { time_ = t; }

  std::span<const double> cloud(std::size_t player, std::size_t env_index) const {
    return data_->clouds[player * env_->size() + env_index];
  }

  std::span<const double> particle(std::size_t player, std::size_t env_index,
                                   std::size_t k) const {
    const auto& c = data_->clouds[player * env_->size() + env_index];
    const std::size_t d = players_[player].dim;
    return std::span<const double>(c.data() + k * d, d);
  }

  // Writable cloud; copies the shared block first if any snapshot still
  // references it.
  std::vector<double>& mutable_cloud(std::size_t player, std::size_t env_index) {
    detach();
    return data_->clouds[player * env_->size() + env_index];
  }

  void check_finite() const {
    for (std::size_t i = 0; i < n_players(); ++i) {
      for (std::size_t j = 0; j < n_env(); ++j) {
        for (double v : cloud(i, j)) {
          if (!std::isfinite(v)) {
            throw Error(Errc::NonFiniteState,
                        "player " + std::to_string(i) + ", env " + std::to_string(j));
          }
        }
      }
    }
  }

  // One file per (player, env index): state_p{i}_y{j}.csv in `dir`.
  void write_checkpoint(const std::string& dir) const {
    for (std::size_t i = 0; i < n_players(); ++i) {
      for (std::size_t j = 0; j < n_env(); ++j) {
        const std::size_t d = players_[i].dim;
        std::vector<std::string> header;
        for (std::size_t c = 0; c < d; ++c) header.push_back("x" + std::to_string(c));
        io::CsvWriter w(dir + "/state_p" + std::to_string(i) + "_y" + std::to_string(j) + ".csv",
                        header);
        auto cl = cloud(i, j);
        for (std::size_t k = 0; k < n_particles_; ++k) {
          w.row(std::vector<double>(cl.begin() + k * d, cl.begin() + (k + 1) * d));
        }
      }
    }
  }

 private:
  friend class StateSnapshot;

  void detach() {
    if (data_.use_count() > 1) {
      data_ = std::make_shared<detail::StateData>(*data_);
    }
  }

  std::shared_ptr<const Environment> env_;
  std::vector<PlayerSpec> players_;
  std::size_t n_particles_ = 0;
  double time_ = 0.0;
  std::shared_ptr<detail::StateData> data_;
};

// Immutable view of all clouds at one instant. Holding a snapshot pins the
// underlying blocks, so later writes to the state copy first and the view
// never changes. Safe to read from many threads.
class StateSnapshot {
 public:
  explicit StateSnapshot(const SystemState& s)
      : env_(s.env_),
        players_(&s.players_),
        n_particles_(s.n_particles_),
        time_(s.time_),
        data_(s.data_),
        id_(detail::next_snapshot_id()) {}

  std::uint64_t id() const { return id_; }
  const Environment& environment() const { return *env_; }
  const std::vector<PlayerSpec>& players() const { return *players_; }
  std::size_t n_players() const { return players_->size(); }
  std::size_t n_env() const { return env_->size(); }
  std::size_t n_particles() const { return n_particles_; }
  double time() const { return time_; }

  std::span<const double> cloud(std::size_t player, std::size_t env_index) const {
    return data_->clouds[player * env_->size() + env_index];
  }

  std::span<const double> particle(std::size_t player, std::size_t env_index,
                                   std::size_t k) const {
    const auto& c = data_->clouds[player * env_->size() + env_index];
    const std::size_t d = (*players_)[player].dim;
    return std::span<const double>(c.data() + k * d, d);
  }

  // Per-coordinate mean of one conditional cloud.
  std::vector<double> cloud_mean(std::size_t player, std::size_t env_index) const {
    const std::size_t d = (*players_)[player].dim;
    std::vector<double> m(d, 0.0);
    auto c = cloud(player, env_index);
    for (std::size_t k = 0; k < n_particles_; ++k) {
      for (std::size_t q = 0; q < d; ++q) m[q] += c[k * d + q];
    }
    for (double& v : m) v /= static_cast<double>(n_particles_);
    return m;
  }

 private:
  std::shared_ptr<const Environment> env_;
  const std::vector<PlayerSpec>* players_;
  std::size_t n_particles_;
  double time_;
  std::shared_ptr<const detail::StateData> data_;
  std::uint64_t id_;
};

inline StateSnapshot snapshot(const SystemState& state) { return StateSnapshot(state); }

// Initial-distribution specification for init_state.
struct GaussianInit {
  double mean = 0.0;
  double std = 1.0;
};
struct UniformInit {
  double lo = 0.0;
  double hi = 1.0;
};
struct PointInit {
  std::vector<double> x;  // broadcast if shorter than the player dimension
};
struct FileInit {
  std::string path;
};
using InitializerSpec = std::variant<GaussianInit, UniformInit, PointInit, FileInit>;

inline SystemState init_state(std::shared_ptr<const Environment> env,
                              std::vector<PlayerSpec> players, std::size_t n_particles,
                              const InitializerSpec& init, std::uint64_t seed) {
  SystemState state(std::move(env), std::move(players), n_particles);

  if (const auto* g = std::get_if<GaussianInit>(&init)) {
    if (!(g->std >= 0.0) || !std::isfinite(g->mean) || !std::isfinite(g->std)) {
      throw Error(Errc::BadInitializerSpec, "gaussian initializer needs finite mean, std >= 0");
    }
  } else if (const auto* u = std::get_if<UniformInit>(&init)) {
    if (!(u->lo <= u->hi)) throw Error(Errc::BadInitializerSpec, "uniform initializer needs lo <= hi");
  }

  if (const auto* f = std::get_if<FileInit>(&init)) {
    auto table = io::read_csv(f->path);
    if (table.rows.size() < n_particles) {
      throw Error(Errc::FileFormatError, f->path + " has fewer rows than n_particles");
    }
    for (std::size_t i = 0; i < state.n_players(); ++i) {
      const std::size_t d = state.players()[i].dim;
      if (table.header.size() != d) {
        throw Error(Errc::FileFormatError,
                    f->path + " has " + std::to_string(table.header.size()) +
                        " columns, player needs " + std::to_string(d));
      }
      for (std::size_t j = 0; j < state.n_env(); ++j) {
        auto& c = state.mutable_cloud(i, j);
        for (std::size_t k = 0; k < n_particles; ++k) {
          for (std::size_t q = 0; q < d; ++q) c[k * d + q] = table.rows[k][q];
        }
      }
    }
    return state;
  }

  for (std::size_t i = 0; i < state.n_players(); ++i) {
    const std::size_t d = state.players()[i].dim;
    for (std::size_t j = 0; j < state.n_env(); ++j) {
      auto& c = state.mutable_cloud(i, j);
      for (std::size_t k = 0; k < n_particles; ++k) {
        RngStream stream(seed, RngDomain::Init, static_cast<std::uint32_t>(i),
                         static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k));
        for (std::size_t q = 0; q < d; ++q) {
          double v = 0.0;
          if (const auto* g = std::get_if<GaussianInit>(&init)) {
            v = g->mean + g->std * stream.normal(q);
          } else if (const auto* u = std::get_if<UniformInit>(&init)) {
            v = u->lo + (u->hi - u->lo) * stream.uniform(q);
          } else if (const auto* p = std::get_if<PointInit>(&init)) {
            v = p->x.empty() ? 0.0 : p->x[q < p->x.size() ? q : p->x.size() - 1];
          }
          c[k * d + q] = v;
        }
      }
    }
  }
  return state;
}

}  // namespace mfl
