#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mfl/contraction.hpp"
#include "mfl/errors.hpp"
#include "mfl/game.hpp"

namespace mfl::games {

// Quadratic test family: player i feels drift
//   a_i g(y) x + sum_l eps_{il} mean(cloud_l | y),
// with g(y) = g0 + g1 * y[0]. Satisfies the contraction hypotheses with
// kappa = -min_i a_i inf_y g(y) and gamma = max_i sum_l |eps_{il}|.
struct QuadraticGameSpec {
  std::vector<double> stiffness;            // a_i > 0
  std::vector<std::vector<double>> coupling;  // eps[i][l]
  double g0 = 1.0;
  double g1 = 0.0;
  bool zero_sum = false;

  std::size_t n_players() const { return stiffness.size(); }

  void validate() const {
    if (stiffness.empty()) throw Error(Errc::BadInitializerSpec, "no players");
    for (double a : stiffness) {
      if (!(a > 0.0)) throw Error(Errc::BadInitializerSpec, "stiffness must be positive");
    }
    if (coupling.size() != stiffness.size()) {
      throw Error(Errc::DimensionMismatch, "coupling matrix size mismatch");
    }
    for (const auto& row : coupling) {
      if (row.size() != stiffness.size()) {
        throw Error(Errc::DimensionMismatch, "coupling matrix must be square");
      }
    }
    if (zero_sum) {
      if (stiffness.size() != 2) {
        throw Error(Errc::BadInitializerSpec, "zero_sum needs exactly two players");
      }
      if (coupling[0][0] != 0.0 || coupling[1][1] != 0.0 ||
          coupling[0][1] != -coupling[1][0]) {
        throw Error(Errc::BadInitializerSpec, "zero_sum coupling must be antisymmetric");
      }
    }
  }

  double declared_gamma() const {
    double g = 0.0;
    for (const auto& row : coupling) {
      double s = 0.0;
      for (double e : row) s += std::abs(e);
      g = std::max(g, s);
    }
    return g;
  }
};

class QuadraticOracle : public GameOracle {
 public:
  QuadraticOracle(QuadraticGameSpec spec, std::vector<PlayerSpec> players)
      : spec_(std::move(spec)), players_(std::move(players)) {
    spec_.validate();
    if (players_.size() != spec_.n_players()) {
      throw Error(Errc::DimensionMismatch, "player specs do not match the game");
    }
    for (std::size_t i = 1; i < players_.size(); ++i) {
      if (players_[i].dim != players_[0].dim) {
        throw Error(Errc::DimensionMismatch,
                    "quadratic coupling needs equal player dimensions");
      }
    }
    for (const auto& row : spec_.coupling) {
      for (double e : row) has_coupling_ = has_coupling_ || (e != 0.0);
    }
  }

  const std::vector<PlayerSpec>& players() const override { return players_; }
  const QuadraticGameSpec& spec() const { return spec_; }

  double env_gain(const Environment& env, std::size_t j) const {
    const double y = (spec_.g1 == 0.0 || env.labeled()) ? 0.0 : env.scalar(j);
    const double g = spec_.g0 + spec_.g1 * y;
    if (!(g > 0.0)) {
      throw Error(Errc::BadInitializerSpec, "environment gain must stay positive");
    }
    return g;
  }

  void prepare(const StateSnapshot& snap) override {
    means_.assign(snap.n_players() * snap.n_env(), {});
    for (std::size_t l = 0; l < snap.n_players(); ++l) {
      for (std::size_t j = 0; j < snap.n_env(); ++j) {
        means_[l * snap.n_env() + j] = snap.cloud_mean(l, j);
      }
    }
    snap_id_ = snap.id();
  }

  void drift(std::size_t player, const StateSnapshot& snap, std::span<const double> x,
             std::size_t env_index, std::span<double> out) const override {
    const double gain = spec_.stiffness[player] * env_gain(snap.environment(), env_index);
    for (std::size_t q = 0; q < x.size(); ++q) out[q] = gain * x[q];
    if (!has_coupling_) return;
    if (snap.id() != snap_id_) {
      throw Error(Errc::BadInitializerSpec, "drift called without prepare()");
    }
    for (std::size_t l = 0; l < spec_.n_players(); ++l) {
      const double e = spec_.coupling[player][l];
      if (e == 0.0) continue;
      const auto& m = means_[l * snap.n_env() + env_index];
      for (std::size_t q = 0; q < x.size(); ++q) out[q] += e * m[q];
    }
  }

  // One-player closed form: F = sum_j w_j [ (a/2) g(y_j) m2_j + (eps/2)|m1_j|^2 ].
  std::optional<MetricReport> energy(const StateSnapshot& snap) const override {
    if (spec_.n_players() != 1) return std::nullopt;
    const double a = spec_.stiffness[0];
    const double eps = spec_.coupling[0][0];
    const std::size_t n = snap.n_particles();
    const std::size_t d = players_[0].dim;
    MetricReport rep;
    rep.name = "energy";
    double value = 0.0, var_acc = 0.0;
    for (std::size_t j = 0; j < snap.n_env(); ++j) {
      const double gain = env_gain(snap.environment(), j);
      auto cloud = snap.cloud(0, j);
      double mean = 0.0, m2acc = 0.0;
      std::vector<double> m1(d, 0.0);
      std::vector<double> contrib(n);
      for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t q = 0; q < d; ++q) {
          const double v = cloud[k * d + q];
          s += v * v;
          m1[q] += v;
        }
        contrib[k] = 0.5 * a * gain * s;
      }
      for (double v : contrib) mean += v;
      mean /= static_cast<double>(n);
      for (double v : contrib) m2acc += (v - mean) * (v - mean);
      m2acc /= static_cast<double>(n > 1 ? n - 1 : 1);
      double m1sq = 0.0;
      for (double v : m1) m1sq += (v / static_cast<double>(n)) * (v / static_cast<double>(n));
      const double w = snap.environment().weight(j);
      value += w * (mean + 0.5 * eps * m1sq);
      var_acc += w * w * m2acc / static_cast<double>(n);
    }
    rep.value = value;
    rep.std_error = std::sqrt(var_acc);
    return rep;
  }

  // Contractivity profile of this family for the Eberle constants.
  KappaProfile kappa_profile(const Environment& env) const {
    double min_gain = env_gain(env, 0);
    for (std::size_t j = 1; j < env.size(); ++j) min_gain = std::min(min_gain, env_gain(env, j));
    double min_a = spec_.stiffness[0];
    for (double a : spec_.stiffness) min_a = std::min(min_a, a);
    return KappaProfile::constant(-min_a * min_gain);
  }

 private:
  QuadraticGameSpec spec_;
  std::vector<PlayerSpec> players_;
  std::vector<std::vector<double>> means_;
  std::uint64_t snap_id_ = 0;
  bool has_coupling_ = false;
};

}  // namespace mfl::games
