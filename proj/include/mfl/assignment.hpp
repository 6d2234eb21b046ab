#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "mfl/errors.hpp"

namespace mfl {
namespace detail {

// Linear sum assignment by shortest augmenting paths with dual potentials
// (Jonker-Volgenant style), O(n^3). cost is row-major n x n. Returns the
// column matched to each row.
inline std::vector<std::size_t> solve_assignment(const std::vector<double>& cost,
                                                 std::size_t n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based sentinels for the standard formulation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> way(n + 1, 0), matched_row(n + 1, 0);

  for (std::size_t row = 1; row <= n; ++row) {
    matched_row[0] = row;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = matched_row[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[matched_row[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (matched_row[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      matched_row[j0] = matched_row[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) {
    if (matched_row[j] != 0) row_to_col[matched_row[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace detail
}  // namespace mfl
