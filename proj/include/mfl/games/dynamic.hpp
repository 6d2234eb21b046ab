#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mfl/environment.hpp"
#include "mfl/errors.hpp"
#include "mfl/game.hpp"
#include "mfl/io.hpp"

namespace mfl::games {

// Coefficient pack of one player's controlled dynamics: vector field phi,
// running cost c, terminal cost g, and the gradients the adjoint needs.
// Matrices are row-major; `out` spans are preallocated by the caller.
class DynamicCoefficients {
 public:
  virtual ~DynamicCoefficients() = default;

  virtual void phi(const StateSnapshot& snap, std::size_t player, std::span<const double> x,
                   std::span<const double> theta, double y, std::span<double> out) const = 0;
  virtual void dphi_dtheta(const StateSnapshot& snap, std::size_t player,
                           std::span<const double> x, std::span<const double> theta, double y,
                           std::span<double> out) const = 0;  // d_theta x d_theta
  virtual void dphi_dx(const StateSnapshot& snap, std::size_t player,
                       std::span<const double> x, std::span<const double> theta, double y,
                       std::span<double> out) const = 0;  // d_theta x d_x
  virtual double cost(const StateSnapshot& snap, std::size_t player, std::span<const double> x,
                      std::span<const double> theta, double y) const = 0;
  virtual void dcost_dtheta(const StateSnapshot& snap, std::size_t player,
                            std::span<const double> x, std::span<const double> theta, double y,
                            std::span<double> out) const = 0;
  virtual void dcost_dx(const StateSnapshot& snap, std::size_t player,
                        std::span<const double> x, std::span<const double> theta, double y,
                        std::span<double> out) const = 0;
  virtual double terminal(std::span<const double> theta) const = 0;
  virtual void dterminal(std::span<const double> theta, std::span<double> out) const = 0;
};

// Linear-quadratic family:
//   phi = A_theta theta + B_x x + b0,
//   c   = (1/2) x' Q_x x + (1/2) theta' Q_theta theta,
//   g   = (1/2) theta' G theta.
class LqCoefficients : public DynamicCoefficients {
 public:
  LqCoefficients(std::size_t theta_dim, std::size_t x_dim)
      : dt_(theta_dim),
        dx_(x_dim),
        a_theta(theta_dim * theta_dim, 0.0),
        b_x(theta_dim * x_dim, 0.0),
        b0(theta_dim, 0.0),
        q_x(x_dim * x_dim, 0.0),
        q_theta(theta_dim * theta_dim, 0.0),
        g_term(theta_dim * theta_dim, 0.0) {}

  static void identity(std::vector<double>& m, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
  }

  void phi(const StateSnapshot&, std::size_t, std::span<const double> x,
           std::span<const double> theta, double, std::span<double> out) const override {
    for (std::size_t r = 0; r < dt_; ++r) {
      double s = b0[r];
      for (std::size_t c = 0; c < dt_; ++c) s += a_theta[r * dt_ + c] * theta[c];
      for (std::size_t c = 0; c < dx_; ++c) s += b_x[r * dx_ + c] * x[c];
      out[r] = s;
    }
  }
  void dphi_dtheta(const StateSnapshot&, std::size_t, std::span<const double>,
                   std::span<const double>, double, std::span<double> out) const override {
    for (std::size_t i = 0; i < dt_ * dt_; ++i) out[i] = a_theta[i];
  }
  void dphi_dx(const StateSnapshot&, std::size_t, std::span<const double>,
               std::span<const double>, double, std::span<double> out) const override {
    for (std::size_t i = 0; i < dt_ * dx_; ++i) out[i] = b_x[i];
  }
  double cost(const StateSnapshot&, std::size_t, std::span<const double> x,
              std::span<const double> theta, double) const override {
    double s = 0.0;
    for (std::size_t r = 0; r < dx_; ++r) {
      for (std::size_t c = 0; c < dx_; ++c) s += 0.5 * x[r] * q_x[r * dx_ + c] * x[c];
    }
    for (std::size_t r = 0; r < dt_; ++r) {
      for (std::size_t c = 0; c < dt_; ++c) {
        s += 0.5 * theta[r] * q_theta[r * dt_ + c] * theta[c];
      }
    }
    return s;
  }
  void dcost_dtheta(const StateSnapshot&, std::size_t, std::span<const double>,
                    std::span<const double> theta, double, std::span<double> out) const override {
    for (std::size_t r = 0; r < dt_; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < dt_; ++c) {
        s += 0.5 * (q_theta[r * dt_ + c] + q_theta[c * dt_ + r]) * theta[c];
      }
      out[r] = s;
    }
  }
  void dcost_dx(const StateSnapshot&, std::size_t, std::span<const double> x,
                std::span<const double>, double, std::span<double> out) const override {
    for (std::size_t r = 0; r < dx_; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < dx_; ++c) s += 0.5 * (q_x[r * dx_ + c] + q_x[c * dx_ + r]) * x[c];
      out[r] = s;
    }
  }
  double terminal(std::span<const double> theta) const override {
    double s = 0.0;
    for (std::size_t r = 0; r < dt_; ++r) {
      for (std::size_t c = 0; c < dt_; ++c) s += 0.5 * theta[r] * g_term[r * dt_ + c] * theta[c];
    }
    return s;
  }
  void dterminal(std::span<const double> theta, std::span<double> out) const override {
    for (std::size_t r = 0; r < dt_; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < dt_; ++c) {
        s += 0.5 * (g_term[r * dt_ + c] + g_term[c * dt_ + r]) * theta[c];
      }
      out[r] = s;
    }
  }

  std::size_t dt_, dx_;
  std::vector<double> a_theta, b_x, b0, q_x, q_theta, g_term;
};

enum class DynScheme { Rk4Continuous, EulerDiscrete };

struct DynamicGameSpec {
  double horizon = 1.0;
  std::size_t theta_dim = 1;
  std::vector<double> theta0;
  DynScheme scheme = DynScheme::Rk4Continuous;
};

struct ThetaPath {
  std::vector<std::vector<double>> theta_env;  // theta at each environment node
  std::vector<std::vector<double>> deriv_env;  // node derivatives (for dense output)
  std::vector<double> theta_T;
  std::vector<double> theta_0;
};

struct AdjointPath {
  std::vector<std::vector<double>> p_env;
  std::vector<double> p_T;
};

// Dynamic game on the time environment: the drift of player i at (x, y_j) is
// grad_x H(x, Theta_j, y_j, P_j) with H = c + p . phi, where Theta solves the
// controlled ODE with the control integral replaced by the cloud average and
// P the backward adjoint ODE on the same grid. One forward-backward solve per
// snapshot (cached in prepare), shared by all particles.
class DynamicGameOracle : public GameOracle {
 public:
  DynamicGameOracle(DynamicGameSpec spec, std::vector<PlayerSpec> players,
                    std::vector<std::shared_ptr<const DynamicCoefficients>> coeffs,
                    std::shared_ptr<const Environment> env)
      : spec_(std::move(spec)),
        players_(std::move(players)),
        coeffs_(std::move(coeffs)),
        env_(std::move(env)) {
    if (players_.empty() || coeffs_.size() != players_.size()) {
      throw Error(Errc::DimensionMismatch, "coefficients do not match players");
    }
    if (spec_.theta0.size() != spec_.theta_dim) {
      throw Error(Errc::DimensionMismatch, "theta0 has wrong dimension");
    }
    validate_grid();
  }

  const std::vector<PlayerSpec>& players() const override { return players_; }
  const DynamicGameSpec& spec() const { return spec_; }

  void prepare(const StateSnapshot& snap) override {
    thetas_.clear();
    adjoints_.clear();
    for (std::size_t i = 0; i < players_.size(); ++i) {
      thetas_.push_back(solve_forward(snap, i));
      adjoints_.push_back(solve_adjoint(snap, i, thetas_.back()));
    }
    snap_id_ = snap.id();
  }

  void drift(std::size_t player, const StateSnapshot& snap, std::span<const double> x,
             std::size_t env_index, std::span<double> out) const override {
    if (snap.id() != snap_id_) {
      throw Error(Errc::BadInitializerSpec, "drift called without prepare()");
    }
    const auto& th = thetas_[player].theta_env[env_index];
    const auto& p = adjoints_[player].p_env[env_index];
    const double y = env_->scalar(env_index);
    const std::size_t dx = players_[player].dim;
    const std::size_t dt = spec_.theta_dim;
    coeffs_[player]->dcost_dx(snap, player, x, th, y, out);
    std::vector<double> jac(dt * dx);
    coeffs_[player]->dphi_dx(snap, player, x, th, y, jac);
    for (std::size_t c = 0; c < dx; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < dt; ++r) s += jac[r * dx + c] * p[r];
      out[c] += s;
    }
  }

  // F = T sum_j w_j E[c | y_j] + g(Theta_T); one player only.
  std::optional<MetricReport> energy(const StateSnapshot& snap) const override {
    if (players_.size() != 1) return std::nullopt;
    const auto path = solve_forward(snap, 0);
    MetricReport rep;
    rep.name = "energy";
    const std::size_t n = snap.n_particles();
    const std::size_t d = players_[0].dim;
    double value = 0.0, var_acc = 0.0;
    const double T = horizon_scale();
    for (std::size_t j = 0; j < env_->size(); ++j) {
      const double y = env_->scalar(j);
      auto cloud = snap.cloud(0, j);
      double mean = 0.0, m2 = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double ck = coeffs_[0]->cost(snap, 0, cloud.subspan(k * d, d),
                                           path.theta_env[j], y);
        const double delta = ck - mean;
        mean += delta / static_cast<double>(k + 1);
        m2 += delta * (ck - mean);
      }
      const double var = m2 / static_cast<double>(n > 1 ? n - 1 : 1);
      const double w = env_->weight(j) * T;
      value += w * mean;
      var_acc += w * w * var / static_cast<double>(n);
    }
    value += coeffs_[0]->terminal(path.theta_T);
    rep.value = value;
    rep.std_error = std::sqrt(var_acc);
    return rep;
  }

  // Forward solve of the controlled ODE (public for diagnostics and tests).
  ThetaPath solve_forward(const StateSnapshot& snap, std::size_t player) const {
    const std::size_t J = env_->size();
    const std::size_t dt = spec_.theta_dim;
    ThetaPath path;
    path.theta_env.assign(J, std::vector<double>(dt));
    path.deriv_env.assign(J, std::vector<double>(dt));
    path.theta_0 = spec_.theta0;

    if (spec_.scheme == DynScheme::EulerDiscrete) {
      std::vector<double> th = spec_.theta0;
      std::vector<double> f(dt);
      for (std::size_t j = 0; j < J; ++j) {
        cloud_avg_phi(snap, player, j, th, env_->scalar(j), f);
        for (std::size_t r = 0; r < dt; ++r) th[r] += f[r];
        path.theta_env[j] = th;
        path.deriv_env[j] = f;
      }
      path.theta_T = th;
      return path;
    }

    // Continuous scheme: RK4 over segment chain 0 -> y_0 -> ... -> y_{J-1} -> T.
    std::vector<double> th = spec_.theta0;
    auto step_rk4 = [&](double u, double v, std::size_t jl, std::size_t jr,
                        std::vector<double>& theta) {
      const double h = v - u;
      const double mid = 0.5 * (u + v);
      std::vector<double> k1(dt), k2(dt), k3(dt), k4(dt), tmp(dt);
      cloud_avg_phi(snap, player, jl, theta, u, k1);
      for (std::size_t r = 0; r < dt; ++r) tmp[r] = theta[r] + 0.5 * h * k1[r];
      mixed_avg_phi(snap, player, jl, jr, tmp, mid, k2);
      for (std::size_t r = 0; r < dt; ++r) tmp[r] = theta[r] + 0.5 * h * k2[r];
      mixed_avg_phi(snap, player, jl, jr, tmp, mid, k3);
      for (std::size_t r = 0; r < dt; ++r) tmp[r] = theta[r] + h * k3[r];
      cloud_avg_phi(snap, player, jr, tmp, v, k4);
      for (std::size_t r = 0; r < dt; ++r) {
        theta[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
      }
    };

    step_rk4(0.0, env_->scalar(0), 0, 0, th);
    path.theta_env[0] = th;
    cloud_avg_phi(snap, player, 0, th, env_->scalar(0), path.deriv_env[0]);
    for (std::size_t j = 0; j + 1 < J; ++j) {
      step_rk4(env_->scalar(j), env_->scalar(j + 1), j, j + 1, th);
      path.theta_env[j + 1] = th;
      cloud_avg_phi(snap, player, j + 1, th, env_->scalar(j + 1), path.deriv_env[j + 1]);
    }
    step_rk4(env_->scalar(J - 1), spec_.horizon, J - 1, J - 1, th);
    path.theta_T = th;
    check_finite(path.theta_T);
    return path;
  }

  // Backward adjoint solve on the same grid and scheme.
  AdjointPath solve_adjoint(const StateSnapshot& snap, std::size_t player,
                            const ThetaPath& theta) const {
    const std::size_t J = env_->size();
    const std::size_t dt = spec_.theta_dim;
    AdjointPath path;
    path.p_env.assign(J, std::vector<double>(dt));
    path.p_T.resize(dt);
    coeffs_[player]->dterminal(theta.theta_T, path.p_T);

    if (spec_.scheme == DynScheme::EulerDiscrete) {
      std::vector<double> p = path.p_T;
      path.p_env[J - 1] = p;
      std::vector<double> rhs(dt);
      for (std::size_t j = J - 1; j-- > 0;) {
        grad_theta_hamiltonian(snap, player, j + 1, theta.theta_env[j],
                               env_->scalar(j + 1), p, rhs);
        for (std::size_t r = 0; r < dt; ++r) p[r] += rhs[r];
        path.p_env[j] = p;
      }
      return path;
    }

    // dP/dy = -grad_theta Hbar; integrate from T down to y_0.
    std::vector<double> p = path.p_T;
    auto theta_between = [&](const std::vector<double>& ta, const std::vector<double>& fa,
                             const std::vector<double>& tb, const std::vector<double>& fb,
                             double h) {
      // Cubic Hermite at the segment midpoint.
      std::vector<double> out(dt);
      for (std::size_t r = 0; r < dt; ++r) {
        out[r] = 0.5 * (ta[r] + tb[r]) + 0.125 * h * (fa[r] - fb[r]);
      }
      return out;
    };
    auto step_back = [&](double u, double v, std::size_t jl, std::size_t jr,
                         const std::vector<double>& th_u, const std::vector<double>& th_mid,
                         const std::vector<double>& th_v, std::vector<double>& pv) {
      const double h = v - u;
      const double mid = 0.5 * (u + v);
      std::vector<double> k1(dt), k2(dt), k3(dt), k4(dt), tmp(dt);
      grad_theta_hamiltonian(snap, player, jr, th_v, v, pv, k1);
      for (std::size_t r = 0; r < dt; ++r) tmp[r] = pv[r] + 0.5 * h * k1[r];
      grad_theta_hamiltonian_mixed(snap, player, jl, jr, th_mid, mid, tmp, k2);
      for (std::size_t r = 0; r < dt; ++r) tmp[r] = pv[r] + 0.5 * h * k2[r];
      grad_theta_hamiltonian_mixed(snap, player, jl, jr, th_mid, mid, tmp, k3);
      for (std::size_t r = 0; r < dt; ++r) tmp[r] = pv[r] + h * k3[r];
      grad_theta_hamiltonian(snap, player, jl, th_u, u, tmp, k4);
      for (std::size_t r = 0; r < dt; ++r) {
        pv[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]);
      }
    };

    {
      // T -> y_{J-1}
      const double u = env_->scalar(J - 1), v = spec_.horizon;
      std::vector<double> f_T(dt);
      cloud_avg_phi(snap, player, J - 1, theta.theta_T, v, f_T);
      const auto th_mid = theta_between(theta.theta_env[J - 1], theta.deriv_env[J - 1],
                                        theta.theta_T, f_T, v - u);
      step_back(u, v, J - 1, J - 1, theta.theta_env[J - 1], th_mid, theta.theta_T, p);
      path.p_env[J - 1] = p;
    }
    for (std::size_t j = J - 1; j-- > 0;) {
      const double u = env_->scalar(j), v = env_->scalar(j + 1);
      const auto th_mid = theta_between(theta.theta_env[j], theta.deriv_env[j],
                                        theta.theta_env[j + 1], theta.deriv_env[j + 1], v - u);
      step_back(u, v, j, j + 1, theta.theta_env[j], th_mid, theta.theta_env[j + 1], p);
      path.p_env[j] = p;
    }
    check_finite(p);
    return path;
  }

  // CSV dump of the cached paths: y,theta...,p...
  void write_paths_csv(const std::string& file, std::size_t player) const {
    std::vector<std::string> header = {"y"};
    for (std::size_t r = 0; r < spec_.theta_dim; ++r) header.push_back("theta" + std::to_string(r));
    for (std::size_t r = 0; r < spec_.theta_dim; ++r) header.push_back("p" + std::to_string(r));
    io::CsvWriter w(file, header);
    for (std::size_t j = 0; j < env_->size(); ++j) {
      std::vector<double> row = {env_->scalar(j)};
      row.insert(row.end(), thetas_[player].theta_env[j].begin(),
                 thetas_[player].theta_env[j].end());
      row.insert(row.end(), adjoints_[player].p_env[j].begin(),
                 adjoints_[player].p_env[j].end());
      w.row(row);
    }
  }

  double horizon_scale() const {
    return spec_.scheme == DynScheme::EulerDiscrete
               ? static_cast<double>(env_->size())
               : spec_.horizon;
  }

 private:
  void validate_grid() const {
    const std::size_t J = env_->size();
    if (spec_.scheme == DynScheme::EulerDiscrete) {
      for (std::size_t j = 0; j < J; ++j) {
        if (std::abs(env_->scalar(j) - static_cast<double>(j + 1)) > 1e-9) {
          throw Error(Errc::EnvironmentMismatch, "discrete scheme needs the grid {1..T}");
        }
      }
      return;
    }
    const double h = spec_.horizon / static_cast<double>(J);
    for (std::size_t j = 0; j < J; ++j) {
      const double expect = (static_cast<double>(j) + 0.5) * h;
      if (std::abs(env_->scalar(j) - expect) > 1e-9 * std::max(1.0, spec_.horizon)) {
        throw Error(Errc::EnvironmentMismatch,
                    "environment must be the midpoint grid of [0, horizon]");
      }
    }
  }

  void check_finite(const std::vector<double>& v) const {
    for (double x : v) {
      if (!std::isfinite(x)) throw Error(Errc::OdeBlowup, "theta/adjoint path diverged");
    }
  }

  void cloud_avg_phi(const StateSnapshot& snap, std::size_t player, std::size_t j,
                     std::span<const double> theta, double y, std::span<double> out) const {
    const std::size_t dx = players_[player].dim;
    const std::size_t dt = spec_.theta_dim;
    const std::size_t n = snap.n_particles();
    auto cloud = snap.cloud(player, j);
    std::vector<double> acc(dt, 0.0), tmp(dt);
    for (std::size_t k = 0; k < n; ++k) {
      coeffs_[player]->phi(snap, player, cloud.subspan(k * dx, dx), theta, y, tmp);
      for (std::size_t r = 0; r < dt; ++r) acc[r] += tmp[r];
    }
    for (std::size_t r = 0; r < dt; ++r) out[r] = acc[r] / static_cast<double>(n);
  }

  void mixed_avg_phi(const StateSnapshot& snap, std::size_t player, std::size_t jl,
                     std::size_t jr, std::span<const double> theta, double y,
                     std::span<double> out) const {
    if (jl == jr) {
      cloud_avg_phi(snap, player, jl, theta, y, out);
      return;
    }
    const std::size_t dt = spec_.theta_dim;
    std::vector<double> a(dt), b(dt);
    cloud_avg_phi(snap, player, jl, theta, y, a);
    cloud_avg_phi(snap, player, jr, theta, y, b);
    for (std::size_t r = 0; r < dt; ++r) out[r] = 0.5 * (a[r] + b[r]);
  }

  // grad_theta Hbar(y, theta, p) = E_cloud[ dc/dtheta + (dphi/dtheta)' p ].
  void grad_theta_h_one(const StateSnapshot& snap, std::size_t player, std::size_t j,
                        std::span<const double> theta, double y, std::span<const double> p,
                        std::span<double> out) const {
    const std::size_t dx = players_[player].dim;
    const std::size_t dt = spec_.theta_dim;
    const std::size_t n = snap.n_particles();
    auto cloud = snap.cloud(player, j);
    std::vector<double> acc(dt, 0.0), gc(dt), jac(dt * dt);
    for (std::size_t k = 0; k < n; ++k) {
      auto x = cloud.subspan(k * dx, dx);
      coeffs_[player]->dcost_dtheta(snap, player, x, theta, y, gc);
      coeffs_[player]->dphi_dtheta(snap, player, x, theta, y, jac);
      for (std::size_t c = 0; c < dt; ++c) {
        double s = gc[c];
        for (std::size_t r = 0; r < dt; ++r) s += jac[r * dt + c] * p[r];
        acc[c] += s;
      }
    }
    for (std::size_t r = 0; r < dt; ++r) out[r] = acc[r] / static_cast<double>(n);
  }

  void grad_theta_hamiltonian(const StateSnapshot& snap, std::size_t player, std::size_t j,
                              std::span<const double> theta, double y,
                              std::span<const double> p, std::span<double> out) const {
    grad_theta_h_one(snap, player, j, theta, y, p, out);
  }

  void grad_theta_hamiltonian_mixed(const StateSnapshot& snap, std::size_t player,
                                    std::size_t jl, std::size_t jr,
                                    std::span<const double> theta, double y,
                                    std::span<const double> p, std::span<double> out) const {
    if (jl == jr) {
      grad_theta_h_one(snap, player, jl, theta, y, p, out);
      return;
    }
    const std::size_t dt = spec_.theta_dim;
    std::vector<double> a(dt), b(dt);
    grad_theta_h_one(snap, player, jl, theta, y, p, a);
    grad_theta_h_one(snap, player, jr, theta, y, p, b);
    for (std::size_t r = 0; r < dt; ++r) out[r] = 0.5 * (a[r] + b[r]);
  }

  DynamicGameSpec spec_;
  std::vector<PlayerSpec> players_;
  std::vector<std::shared_ptr<const DynamicCoefficients>> coeffs_;
  std::shared_ptr<const Environment> env_;
  std::vector<ThetaPath> thetas_;
  std::vector<AdjointPath> adjoints_;
  std::uint64_t snap_id_ = 0;
};

}  // namespace mfl::games
