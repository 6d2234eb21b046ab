#pragma once

// Shared test fixtures: minimal oracles and closed-form references used
// across the suites. Everything here is test-only and independent of the
// library implementation paths it checks.

#include <cmath>
#include <memory>
#include <mutex>
#include <set>
#include <vector>

#include "mfl/environment.hpp"
#include "mfl/game.hpp"
#include "mfl/state.hpp"

namespace mfl_test {

inline std::shared_ptr<const mfl::Environment> point_env() {
  return std::make_shared<mfl::Environment>(mfl::Environment::single_point(0.0));
}

// drift = a * x (no mean-field term): Ornstein-Uhlenbeck anchor with
// invariant conditional law N(0, sigma^2 / (2a)).
class OuOracle : public mfl::GameOracle {
 public:
  explicit OuOracle(double a, std::size_t dim = 1) : a_(a), players_{{dim}} {}

  const std::vector<mfl::PlayerSpec>& players() const override { return players_; }

  void drift(std::size_t, const mfl::StateSnapshot&, std::span<const double> x,
             std::size_t, std::span<double> out) const override {
    for (std::size_t q = 0; q < x.size(); ++q) out[q] = a_ * x[q];
  }

  std::optional<mfl::MetricReport> energy(const mfl::StateSnapshot& snap) const override {
    // F(nu) = (a/2) E|X|^2 averaged over the environment.
    mfl::MetricReport rep;
    rep.name = "energy";
    double value = 0.0;
    double var_acc = 0.0;
    const std::size_t n = snap.n_particles();
    for (std::size_t j = 0; j < snap.n_env(); ++j) {
      auto cloud = snap.cloud(0, j);
      const std::size_t d = players_[0].dim;
      std::vector<double> contrib(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t q = 0; q < d; ++q) s += cloud[k * d + q] * cloud[k * d + q];
        contrib[k] = 0.5 * a_ * s;
      }
      double mean = 0.0;
      for (double v : contrib) mean += v;
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : contrib) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n - 1);
      const double w = snap.environment().weight(j);
      value += w * mean;
      var_acc += w * w * var / static_cast<double>(n);
    }
    rep.value = value;
    rep.std_error = std::sqrt(var_acc);
    return rep;
  }

 private:
  double a_;
  std::vector<mfl::PlayerSpec> players_;
};

class ZeroOracle : public mfl::GameOracle {
 public:
  explicit ZeroOracle(std::size_t dim = 1) : players_{{dim}} {}
  const std::vector<mfl::PlayerSpec>& players() const override { return players_; }
  void drift(std::size_t, const mfl::StateSnapshot&, std::span<const double>,
             std::size_t, std::span<double> out) const override {
    for (auto& v : out) v = 0.0;
  }

 private:
  std::vector<mfl::PlayerSpec> players_;
};

// Records the snapshot ids it is called with; used to verify that every
// drift evaluation within one step sees the same snapshot.
class SnapshotSpyOracle : public mfl::GameOracle {
 public:
  SnapshotSpyOracle() : players_{{1}} {}
  const std::vector<mfl::PlayerSpec>& players() const override { return players_; }
  void drift(std::size_t, const mfl::StateSnapshot& snap, std::span<const double> x,
             std::size_t, std::span<double> out) const override {
    {
      std::lock_guard<std::mutex> lk(mu_);
      ids_.insert(snap.id());
    }
    out[0] = x[0];
  }
  std::size_t distinct_ids() const {
    std::lock_guard<std::mutex> lk(mu_);
    return ids_.size();
  }
  void reset() {
    std::lock_guard<std::mutex> lk(mu_);
    ids_.clear();
  }

 private:
  std::vector<mfl::PlayerSpec> players_;
  mutable std::mutex mu_;
  mutable std::set<std::uint64_t> ids_;
};

inline double sample_mean(std::span<const double> xs) {
  double s = 0.0;
  for (double v : xs) s += v;
  return s / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
  const double m = sample_mean(xs);
  double s = 0.0;
  for (double v : xs) s += (v - m) * (v - m);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace mfl_test
