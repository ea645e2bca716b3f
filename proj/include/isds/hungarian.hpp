#pragma once

#include "isds/common.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace isds {

// Kuhn-Munkres on a square/rectangular cost matrix (rows x cols), minimizing.
// Returns assignment[r] = assigned column for row r, or -1 if unassigned
// (possible only when rows > cols).
inline std::vector<int> hungarian_min(const Mat& cost) {
  const int n_rows = static_cast<int>(cost.rows());
  const int n_cols = static_cast<int>(cost.cols());
  const int dim = std::max(n_rows, n_cols);
  const double big = 1e18;

  // pad to square; a padded cell means "unmatched"
  std::vector<std::vector<double>> a(dim + 1, std::vector<double>(dim + 1, 0.0));
  for (int i = 1; i <= dim; ++i)
    for (int j = 1; j <= dim; ++j)
      a[i][j] = (i <= n_rows && j <= n_cols) ? cost(i - 1, j - 1) : big;

  std::vector<double> u(dim + 1, 0.0), v(dim + 1, 0.0);
  std::vector<int> p(dim + 1, 0), way(dim + 1, 0);
  for (int i = 1; i <= dim; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(dim + 1, std::numeric_limits<double>::max());
    std::vector<char> used(dim + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = std::numeric_limits<double>::max();
      int j1 = -1;
      for (int j = 1; j <= dim; ++j) {
        if (used[j]) continue;
        const double cur = a[i0][j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= dim; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> assignment(n_rows, -1);
  for (int j = 1; j <= dim; ++j) {
    if (p[j] >= 1 && p[j] <= n_rows && j <= n_cols) assignment[p[j] - 1] = j - 1;
  }
  return assignment;
}

// Maximizing variant.
inline std::vector<int> hungarian_max(const Mat& score) { return hungarian_min(-score); }

}  // namespace isds
