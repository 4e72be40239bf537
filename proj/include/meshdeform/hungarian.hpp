// hungarian.hpp — exact minimum-cost perfect matching on a square cost matrix
// via the O(N³) potentials algorithm. Deterministic: ties resolve to the
// lowest column index.
#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace meshdeform {

struct AssignmentResult {
  std::vector<std::size_t> column_of_row;  // column matched to each row
  double cost = 0.0;
};

// `cost` is row-major n x n. Returns the matching minimizing the total cost.
inline AssignmentResult solve_assignment(const std::vector<double>& cost, std::size_t n) {
  if (n == 0) throw std::invalid_argument("assignment: empty cost matrix");
  if (cost.size() != n * n)
    throw std::invalid_argument("assignment: cost matrix size " + std::to_string(cost.size()) +
                                " is not " + std::to_string(n) + "^2");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-indexed potentials; p[j] = row matched to column j (0 = none yet).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    // Augment along the alternating path back to the artificial column 0.
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  AssignmentResult result;
  result.column_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    result.column_of_row[p[j] - 1] = j - 1;
    result.cost += cost[(p[j] - 1) * n + (j - 1)];
  }
  return result;
}

}  // namespace meshdeform
