#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfl/state.hpp"

namespace mfl {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::optional<double> std_error;
  std::vector<std::pair<std::string, double>> details;
  bool failed = false;
};

// Drift oracle of a game: drift(i, snap, x, j) returns the gradient (in x) of
// player i's linear functional derivative at environment point j, i.e. the
// negated drift of the associated Langevin system.
//
// Contract: drift must be a pure function of (player, snapshot id, x, env);
// the integrator calls prepare() exactly once per step before any drift
// evaluation, and drift may then be called from many threads. Oracles whose
// drift needs pairwise O(n^2) sums over clouds should subsample in prepare()
// (convention: an oracle option subsample_m, default min(n_particles, 1024)).
class GameOracle {
 public:
  virtual ~GameOracle() = default;

  virtual const std::vector<PlayerSpec>& players() const = 0;
  std::size_t n_players() const { return players().size(); }

  // Per-step hook: cache whatever the drift needs from this snapshot.
  virtual void prepare(const StateSnapshot& snap) { (void)snap; }

  virtual void drift(std::size_t player, const StateSnapshot& snap,
                     std::span<const double> x, std::size_t env_index,
                     std::span<double> out) const = 0;

  // The value of the potential F at this configuration, when computable.
  virtual std::optional<MetricReport> energy(const StateSnapshot& snap) const {
    (void)snap;
    return std::nullopt;
  }

  // Deterministic index subset for oracles that need to subsample a cloud.
  static std::vector<std::size_t> subsample_indices(std::size_t m, std::size_t n,
                                                    std::uint64_t seed) {
    if (m >= n) {
      std::vector<std::size_t> all(n);
      for (std::size_t k = 0; k < n; ++k) all[k] = k;
      return all;
    }
    // Floyd's algorithm over a stateless stream.
    std::vector<std::size_t> out;
    out.reserve(m);
    RngStream stream(seed, RngDomain::Scratch, 0, 0, 0);
    std::uint64_t draw = 0;
    for (std::size_t j = n - m; j < n; ++j) {
      const std::size_t t =
          static_cast<std::size_t>(stream.uniform(draw++) * static_cast<double>(j + 1));
      const std::size_t pick = t > j ? j : t;
      bool seen = false;
      for (auto v : out) {
        if (v == pick) {
          seen = true;
          break;
        }
      }
      out.push_back(seen ? j : pick);
    }
    return out;
  }
};

}  // namespace mfl
