#include <cmath>
#include <limits>
#include <vector>

#include "amps/errors.hpp"
#include "amps/merge.hpp"

namespace amps {

namespace {

// Kuhn-Munkres with potentials, O(n^3). Minimizes sum cost(r, assign[r]).
std::vector<std::size_t> hungarian_min(const std::vector<double>& cost, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
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
  std::vector<std::size_t> assign(n);
  for (std::size_t j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
  return assign;
}

// Best total over the sub-matrix of the given rows and columns.
double best_value(const RowMatrix& w, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  const std::size_t n = rows.size();
  if (n == 0) return 0.0;
  std::vector<double> cost(n * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) cost[r * n + c] = -w(rows[r], cols[c]);
  const auto assign = hungarian_min(cost, n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += w(rows[r], cols[assign[r]]);
  return total;
}

}  // namespace

Permutation assignment_solve(const RowMatrix& weights) {
  if (weights.rows() != weights.cols()) throw ShapeMismatch("assignment_solve: weights must be square");
  const std::size_t n = static_cast<std::size_t>(weights.rows());
  if (n == 0) return {};
  if (!weights.allFinite()) throw DomainError("assignment_solve: weights must be finite");

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const double optimum = best_value(weights, all, all);
  const double tie_eps = 1e-11 * std::max(1.0, static_cast<double>(n) * weights.cwiseAbs().maxCoeff());

  // Fix rows in order, taking the smallest column that keeps the optimum reachable.
  Permutation perm(n);
  std::vector<std::size_t> free_cols = all;
  double fixed = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<std::size_t> rest_rows(all.begin() + static_cast<std::ptrdiff_t>(r) + 1, all.end());
    bool placed = false;
    for (std::size_t idx = 0; idx < free_cols.size(); ++idx) {
      const std::size_t c = free_cols[idx];
      std::vector<std::size_t> rest_cols;
      for (std::size_t other : free_cols)
        if (other != c) rest_cols.push_back(other);
      const double reach = fixed + weights(r, c) + best_value(weights, rest_rows, rest_cols);
      if (reach >= optimum - tie_eps || idx + 1 == free_cols.size()) {
        perm[r] = c;
        fixed += weights(r, c);
        free_cols.erase(free_cols.begin() + static_cast<std::ptrdiff_t>(idx));
        placed = true;
        break;
      }
    }
    if (!placed) throw Error("assignment_solve: internal failure");
  }
  return perm;
}

}  // namespace amps
