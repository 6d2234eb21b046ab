#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mfl/errors.hpp"
#include "mfl/io.hpp"

namespace mfl {

// Finite weighted support approximating the environment distribution. Points
// are either fixed-length real vectors or opaque string labels (never both).
class Environment {
 public:
  static Environment from_points(std::vector<std::vector<double>> points,
                                 std::vector<double> weights) {
    Environment env;
    env.points_ = std::move(points);
    env.weights_ = std::move(weights);
    env.validate();
    return env;
  }

  static Environment from_labels(std::vector<std::string> labels,
                                 std::vector<double> weights) {
    Environment env;
    env.labels_ = std::move(labels);
    env.points_.resize(env.labels_.size());
    env.weights_ = std::move(weights);
    env.validate();
    return env;
  }

  // Single-point environment: the classical (environment-free) game.
  static Environment single_point(double y = 0.0) {
    return from_points({{y}}, {1.0});
  }

  // Midpoint grid on [lo, hi]: n equispaced points (j+1/2)h with exact
  // weights 1/n, the quadrature used for continuous-time dynamic games.
  static Environment uniform_grid(double lo, double hi, std::size_t n) {
    if (n == 0) throw Error(Errc::EmptySupport, "uniform_grid with n=0");
    const double h = (hi - lo) / static_cast<double>(n);
    std::vector<std::vector<double>> pts(n);
    for (std::size_t j = 0; j < n; ++j) {
      pts[j] = {lo + (static_cast<double>(j) + 0.5) * h};
    }
    return from_points(std::move(pts), std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  // Integer grid {1, ..., T} with uniform weights (discrete-time games).
  static Environment integer_grid(std::size_t T) {
    if (T == 0) throw Error(Errc::EmptySupport, "integer_grid with T=0");
    std::vector<std::vector<double>> pts(T);
    for (std::size_t j = 0; j < T; ++j) pts[j] = {static_cast<double>(j + 1)};
    return from_points(std::move(pts), std::vector<double>(T, 1.0 / static_cast<double>(T)));
  }

  // CSV with columns y0,...,weight (one environment point per row).
  static Environment from_file(const std::string& path) {
    auto table = io::read_csv(path);
    if (table.header.empty() || table.header.back() != "weight") {
      throw Error(Errc::FileFormatError, "environment CSV needs trailing 'weight' column: " + path);
    }
    std::vector<std::vector<double>> pts;
    std::vector<double> w;
    for (const auto& row : table.rows) {
      pts.emplace_back(row.begin(), row.end() - 1);
      w.push_back(row.back());
    }
    return from_points(std::move(pts), std::move(w));
  }

  std::size_t size() const { return weights_.size(); }
  bool labeled() const { return !labels_.empty(); }
  const std::vector<std::vector<double>>& points() const { return points_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& point(std::size_t j) const { return points_[j]; }
  double weight(std::size_t j) const { return weights_[j]; }

  // First coordinate of point j; the scalar environment value used by games
  // on 1-D environments (time grids).
  double scalar(std::size_t j) const {
    if (labeled() || points_[j].empty()) {
      throw Error(Errc::EnvironmentMismatch, "environment point has no scalar value");
    }
    return points_[j][0];
  }

  bool same_support(const Environment& other, double tol = 1e-12) const {
    if (size() != other.size() || labeled() != other.labeled()) return false;
    if (labeled()) return labels_ == other.labels_;
    for (std::size_t j = 0; j < size(); ++j) {
      if (points_[j].size() != other.points_[j].size()) return false;
      for (std::size_t c = 0; c < points_[j].size(); ++c) {
        if (std::abs(points_[j][c] - other.points_[j][c]) > tol) return false;
      }
      if (std::abs(weights_[j] - other.weights_[j]) > tol) return false;
    }
    return true;
  }

  void write_csv(const std::string& path) const {
    if (labeled()) throw Error(Errc::FileFormatError, "labeled environments have no CSV form");
    const std::size_t d = points_.empty() ? 0 : points_[0].size();
    std::vector<std::string> header;
    for (std::size_t c = 0; c < d; ++c) header.push_back("y" + std::to_string(c));
    header.push_back("weight");
    io::CsvWriter w(path, header);
    for (std::size_t j = 0; j < size(); ++j) {
      std::vector<double> row = points_[j];
      row.push_back(weights_[j]);
      w.row(row);
    }
  }

 private:
  void validate() {
    if (weights_.empty()) throw Error(Errc::EmptySupport, "environment needs at least one point");
    if (points_.size() != weights_.size()) {
      throw Error(Errc::DimensionMismatch, "points/weights length mismatch");
    }
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw Error(Errc::NegativeWeight, "weight " + io::format_double(w));
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw Error(Errc::WeightSumOutOfRange,
                  "weights sum to " + io::format_double(sum) + ", expected 1");
    }
    for (double& w : weights_) w /= sum;

    if (!labels_.empty()) {
      for (std::size_t a = 0; a < labels_.size(); ++a) {
        for (std::size_t b = a + 1; b < labels_.size(); ++b) {
          if (labels_[a] == labels_[b]) {
            throw Error(Errc::DimensionMismatch, "duplicate environment label " + labels_[a]);
          }
        }
      }
      return;
    }
    const std::size_t d = points_[0].size();
    for (const auto& p : points_) {
      if (p.size() != d) throw Error(Errc::DimensionMismatch, "ragged environment points");
    }
    for (std::size_t a = 0; a < points_.size(); ++a) {
      for (std::size_t b = a + 1; b < points_.size(); ++b) {
        if (points_[a] == points_[b]) {
          throw Error(Errc::DimensionMismatch, "duplicate environment point");
        }
      }
    }
  }

  std::vector<std::vector<double>> points_;
  std::vector<std::string> labels_;
  std::vector<double> weights_;
};

inline Environment make_environment(std::vector<std::vector<double>> points,
                                    std::vector<double> weights) {
  return Environment::from_points(std::move(points), std::move(weights));
}

inline Environment make_environment(const std::vector<double>& scalar_points,
                                    std::vector<double> weights) {
  std::vector<std::vector<double>> pts;
  pts.reserve(scalar_points.size());
  for (double y : scalar_points) pts.push_back({y});
  return Environment::from_points(std::move(pts), std::move(weights));
}

}  // namespace mfl
