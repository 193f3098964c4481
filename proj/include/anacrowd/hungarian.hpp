#pragma once

// Kuhn-Munkres with potentials, O(n^2 m) for an n x m matrix (n <= m after an
// internal transpose). Used for the one-to-one entity alignment in CEAF.

#include <cstddef>
#include <limits>
#include <type_traits>
#include <vector>

namespace anacrowd {

template <typename T>
struct Assignment {
  std::vector<int> row_to_col;  // -1 when the row is unmatched
  T total{};
};

// Minimum-cost assignment matching every row of the smaller side.
template <typename T>
Assignment<T> min_cost_assignment(const std::vector<std::vector<T>>& cost) {
  static_assert(std::is_arithmetic_v<T>);
  Assignment<T> out;
  const std::size_t rows = cost.size();
  if (rows == 0) return out;
  const std::size_t cols = cost.front().size();
  out.row_to_col.assign(rows, -1);
  if (cols == 0) return out;

  const bool transpose = rows > cols;
  const std::size_t n = transpose ? cols : rows;
  const std::size_t m = transpose ? rows : cols;
  const auto at = [&](std::size_t i, std::size_t j) -> T {
    return transpose ? cost[j][i] : cost[i][j];
  };

  const T inf = std::numeric_limits<T>::has_infinity ? std::numeric_limits<T>::infinity()
                                                     : std::numeric_limits<T>::max() / 2;
  // 1-based with a virtual column 0.
  std::vector<T> u(n + 1, T{}), v(m + 1, T{});
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<T> minv(m + 1, inf);
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      T delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const T cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
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
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const std::size_t i = p[j] - 1, col = j - 1;
    if (transpose) {
      out.row_to_col[col] = static_cast<int>(i);
    } else {
      out.row_to_col[i] = static_cast<int>(col);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (out.row_to_col[r] >= 0) out.total += cost[r][out.row_to_col[r]];
  }
  return out;
}

// Maximum-weight assignment; weights are assumed non-negative so matching the
// full smaller side is never worse than leaving a row out.
template <typename T>
Assignment<T> max_weight_assignment(const std::vector<std::vector<T>>& weight) {
  std::vector<std::vector<T>> cost(weight.size());
  for (std::size_t i = 0; i < weight.size(); ++i) {
    cost[i].reserve(weight[i].size());
    for (const T& w : weight[i]) cost[i].push_back(-w);
  }
  Assignment<T> a = min_cost_assignment(cost);
  a.total = T{};
  for (std::size_t r = 0; r < weight.size(); ++r) {
    if (a.row_to_col[r] >= 0) a.total += weight[r][a.row_to_col[r]];
  }
  return a;
}

}  // namespace anacrowd
