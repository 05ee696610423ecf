#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace stac {

/// Minimum-cost rectangular assignment (Kuhn-Munkres with potentials, O(n^2 m)).
/// Returns, for every row, the assigned column or -1. min(rows, cols) pairs are
/// always produced; callers discard pairs they consider non-matches.
template <typename Derived>
std::vector<int> solve_assignment(const Eigen::MatrixBase<Derived>& cost_in) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index rows = cost_in.rows(), cols = cost_in.cols();
  std::vector<int> result(static_cast<std::size_t>(rows), -1);
  if (rows == 0 || cols == 0) return result;

  const bool transposed = rows > cols;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cost;
  if (transposed) cost = cost_in.transpose();
  else cost = cost_in;
  const Eigen::Index n = cost.rows(), m = cost.cols();  // n <= m

  const Scalar inf = std::numeric_limits<Scalar>::max();
  std::vector<Scalar> u(n + 1, 0), v(m + 1, 0), minv(m + 1);
  std::vector<Eigen::Index> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = p[j0];
      Scalar delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const Scalar cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= m; ++j) {
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
      const Eigen::Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (Eigen::Index j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) result[static_cast<std::size_t>(j - 1)] = static_cast<int>(p[j] - 1);
    else result[static_cast<std::size_t>(p[j] - 1)] = static_cast<int>(j - 1);
  }
  return result;
}

}  // namespace stac
