#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "pointdet/matching.hpp"

namespace pointdet {

namespace {

struct SquareSolution {
  std::vector<int> row_to_col;
  std::vector<double> u;  // row potentials, 1-based
  std::vector<double> v;  // col potentials, 1-based
};

// Shortest-augmenting-path assignment (potentials form) on a square matrix.
// O(n^3). Returns the matching plus the optimal dual potentials.
SquareSolution solve_square(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
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
    } while (j0 != 0);
  }
  SquareSolution out;
  out.row_to_col.assign(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) out.row_to_col[p[j] - 1] = j - 1;
  out.u = std::move(u);
  out.v = std::move(v);
  return out;
}

// Sum of the real-entry costs of a full square assignment. Pad pairs carry a
// constant sentinel each and are excluded so tie comparisons are immune to
// sentinel round-off.
double real_total(const Mat& padded, const std::vector<int>& row_to_col, int n_rows, int n_cols) {
  double t = 0.0;
  for (int i = 0; i < n_rows; ++i) {
    const int j = row_to_col[i];
    if (j >= 0 && j < n_cols) t += padded(i, j);
  }
  return t;
}

}  // namespace

std::vector<std::pair<int, int>> hungarian_assign(const Mat& cost) {
  const int nr = static_cast<int>(cost.rows());
  const int nc = static_cast<int>(cost.cols());
  if (nr == 0 || nc == 0) return {};
  for (double v : cost.data())
    if (!std::isfinite(v)) throw std::invalid_argument("hungarian_assign: non-finite cost");

  const int n = std::max(nr, nc);
  double max_abs = 0.0;
  for (double v : cost.data()) max_abs = std::max(max_abs, std::fabs(v));
  const double scale = std::max(1.0, max_abs);
  // The sentinel only has to dominate any single real entry; because padding
  // is one-sided the number of pad pairs is the same in every full
  // assignment, so its exact value never influences which real pairs win.
  const double sentinel = 1.0 + 4.0 * n * scale;

  Mat padded(n, n, sentinel);
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nc; ++j) padded(i, j) = cost(i, j);

  SquareSolution base = solve_square(padded);
  std::vector<int> assign = base.row_to_col;
  const double best_real = real_total(padded, assign, nr, nc);
  const double tie_eps = 1e-13 * std::max(1.0, std::fabs(best_real)) * n;

  // Fast path: if no zero-reduced-cost edge exists outside the chosen
  // matching, the optimum is unique and already lexicographically minimal.
  bool maybe_tied = false;
  const double rc_eps = 1e-10 * scale;
  for (int i = 1; i <= n && !maybe_tied; ++i) {
    for (int j = 1; j <= n; ++j) {
      if (assign[i - 1] == j - 1) continue;
      const double rc = padded(i - 1, j - 1) - base.u[i] - base.v[j];
      if (rc <= rc_eps) {
        maybe_tied = true;
        break;
      }
    }
  }

  if (maybe_tied) {
    // Fix rows top to bottom, always trying the smallest candidate column
    // first and keeping it when an equal-cost completion exists. Greedy per
    // row is exact for lexicographic order on the (row, col) pair list: an
    // earlier matched row beats any later one, and a smaller column wins
    // within a row.
    std::vector<char> col_free(n, 1);
    double locked_total = 0.0;
    for (int i = 0; i < nr; ++i) {
      const int m = n - i - 1;  // rows i+1..n-1 remain
      const int jA = assign[i];
      // Candidate columns that would improve the pair list over jA: every
      // free real column below jA, or all free real columns if row i is
      // currently unmatched (assigned to a pad column).
      std::vector<int> candidates;
      const int limit = (jA < nc) ? jA : nc;
      for (int j = 0; j < limit; ++j)
        if (col_free[j]) candidates.push_back(j);

      if (!candidates.empty()) {
        // Fresh duals for the remaining subproblem let us skip candidates
        // whose forced reduced cost already exceeds the tie budget.
        std::vector<int> rows_left, cols_left;
        for (int r = i; r < n; ++r) rows_left.push_back(r);
        for (int j = 0; j < n; ++j)
          if (col_free[j]) cols_left.push_back(j);
        Mat sub(rows_left.size(), cols_left.size());
        for (std::size_t r = 0; r < rows_left.size(); ++r)
          for (std::size_t c = 0; c < cols_left.size(); ++c)
            sub(r, c) = padded(rows_left[r], cols_left[c]);
        SquareSolution cur = solve_square(sub);
        const double cur_real =
            locked_total + [&] {
              double t = 0.0;
              for (std::size_t r = 0; r < rows_left.size(); ++r) {
                const int j = cur.row_to_col[r];
                if (rows_left[r] < nr && cols_left[j] < nc) t += padded(rows_left[r], cols_left[j]);
              }
              return t;
            }();
        (void)cur_real;  // equals best_real up to round-off by optimality

        for (int j : candidates) {
          const auto cpos = std::find(cols_left.begin(), cols_left.end(), j) - cols_left.begin();
          const double rc = sub(0, cpos) - cur.u[1] - cur.v[cpos + 1];
          if (rc > tie_eps + rc_eps) continue;  // cannot be part of a tie

          // Force (i, j) and solve the completion over the rest.
          std::vector<int> sub_cols;
          for (int c : cols_left)
            if (c != j) sub_cols.push_back(c);
          double forced = locked_total + padded(i, j);
          std::vector<int> completion(m, -1);
          if (m > 0) {
            Mat rest(m, m);
            for (int r = 0; r < m; ++r)
              for (int c = 0; c < m; ++c) rest(r, c) = padded(rows_left[r + 1], sub_cols[c]);
            SquareSolution sol = solve_square(rest);
            for (int r = 0; r < m; ++r) {
              completion[r] = sub_cols[sol.row_to_col[r]];
              if (rows_left[r + 1] < nr && completion[r] < nc)
                forced += padded(rows_left[r + 1], completion[r]);
            }
          }
          if (forced <= best_real + tie_eps) {
            assign[i] = j;
            for (int r = 0; r < m; ++r) assign[rows_left[r + 1]] = completion[r];
            break;
          }
        }
      }
      if (assign[i] >= 0 && assign[i] < nc && i < nr) locked_total += padded(i, assign[i]);
      col_free[assign[i]] = 0;
    }
  }

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < nr; ++i) {
    const int j = assign[i];
    if (j >= 0 && j < nc) pairs.emplace_back(i, j);
  }
  return pairs;
}

}  // namespace pointdet
