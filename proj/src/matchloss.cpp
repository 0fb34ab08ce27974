#include "rfslam/matchloss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rfslam::matchloss {

CostMatrix CostMatrix::zeros(int rows, int cols) {
  CostMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.data.assign(static_cast<std::size_t>(rows * cols), 0.0);
  return m;
}

namespace {

// Kuhn augmenting path restricted to allowed edges and unused columns.
bool augment(int row, const std::vector<std::vector<int>>& adj,
             const std::vector<char>& col_blocked, std::vector<int>& col_match,
             std::vector<char>& seen) {
  for (int c : adj[static_cast<std::size_t>(row)]) {
    const auto ci = static_cast<std::size_t>(c);
    if (col_blocked[ci] || seen[ci]) continue;
    seen[ci] = 1;
    if (col_match[ci] < 0 || augment(col_match[ci], adj, col_blocked, col_match, seen)) {
      col_match[ci] = row;
      return true;
    }
  }
  return false;
}

bool saturates(const std::vector<int>& rows, const std::vector<std::vector<int>>& adj,
               const std::vector<char>& col_blocked, int ncols) {
  std::vector<int> col_match(static_cast<std::size_t>(ncols), -1);
  for (int r : rows) {
    std::vector<char> seen(static_cast<std::size_t>(ncols), 0);
    if (!augment(r, adj, col_blocked, col_match, seen)) return false;
  }
  return true;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  const int n = cost.rows, m = cost.cols;
  if (n > m) throw ConfigError("hungarian: more rows than columns");
  Assignment out;
  if (n == 0) return out;
  for (double v : cost.data) {
    if (!std::isfinite(v)) throw ConfigError("hungarian: non-finite cost");
  }

  // Shortest augmenting paths with potentials (1-based, column 0 is a sentinel).
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<int> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), kInf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(p[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<std::size_t>(j)] > 0) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }

  // Tight edges of the optimal duals. Any assignment that uses only tight
  // edges and covers every column with a negative potential is optimal.
  double scale = 1.0;
  for (double c : cost.data) scale = std::max(scale, std::abs(c));
  const double tol = 1e-12 * scale;
  std::vector<std::vector<int>> tight(static_cast<std::size_t>(n));
  bool unique = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (cost(i, j) - u[static_cast<std::size_t>(i + 1)] - v[static_cast<std::size_t>(j + 1)] <= tol) {
        tight[static_cast<std::size_t>(i)].push_back(j);
      }
    }
    if (tight[static_cast<std::size_t>(i)].size() > 1) unique = false;
  }

  if (!unique) {
    std::vector<char> must_cover(static_cast<std::size_t>(m), 0);
    for (int j = 0; j < m; ++j) must_cover[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(j + 1)] < -tol;
    // Column -> rows adjacency for the cover check.
    std::vector<std::vector<int>> col_adj(static_cast<std::size_t>(m));
    std::vector<char> col_used(static_cast<std::size_t>(m), 0);
    const auto feasible = [&](int next_row) {
      std::vector<int> rows;
      for (int r = next_row; r < n; ++r) rows.push_back(r);
      if (!saturates(rows, tight, col_used, m)) return false;
      // Columns still to cover must be matchable to the remaining rows.
      for (auto& a : col_adj) a.clear();
      for (int r = next_row; r < n; ++r) {
        for (int c : tight[static_cast<std::size_t>(r)]) col_adj[static_cast<std::size_t>(c)].push_back(r - next_row);
      }
      std::vector<int> cols;
      for (int c = 0; c < m; ++c) {
        if (must_cover[static_cast<std::size_t>(c)] && !col_used[static_cast<std::size_t>(c)]) cols.push_back(c);
      }
      std::vector<char> none(static_cast<std::size_t>(n - next_row), 0);
      return saturates(cols, col_adj, none, n - next_row);
    };
    for (int i = 0; i < n; ++i) {
      bool placed = false;
      for (int j : tight[static_cast<std::size_t>(i)]) {
        if (col_used[static_cast<std::size_t>(j)]) continue;
        col_used[static_cast<std::size_t>(j)] = 1;
        if (feasible(i + 1)) {
          row_to_col[static_cast<std::size_t>(i)] = j;
          placed = true;
          break;
        }
        col_used[static_cast<std::size_t>(j)] = 0;
      }
      // Only reachable through rounding trouble; keep the solver's answer.
      if (!placed) break;
    }
  }

  for (int i = 0; i < n; ++i) {
    const int j = row_to_col[static_cast<std::size_t>(i)];
    out.pairs.emplace_back(i, j);
    out.total_cost += cost(i, j);
  }
  return out;
}

SmoothL1 smooth_l1(double x, double beta) {
  if (!(beta > 0.0)) throw ConfigError("smooth_l1: beta must be > 0");
  const double ax = std::abs(x);
  if (ax < beta) return {0.5 * x * x / beta, x / beta};
  return {ax - 0.5 * beta, x > 0.0 ? 1.0 : -1.0};
}

SetLossKind parse_set_loss_kind(const std::string& s) {
  if (s == "hungarian") return SetLossKind::kHungarian;
  if (s == "chamfer") return SetLossKind::kChamfer;
  if (s == "hausdorff") return SetLossKind::kHausdorff;
  if (s == "greedy") return SetLossKind::kGreedy;
  throw ConfigError("unknown set loss '" + s + "'");
}

const char* set_loss_kind_name(SetLossKind k) {
  switch (k) {
    case SetLossKind::kHungarian: return "hungarian";
    case SetLossKind::kChamfer: return "chamfer";
    case SetLossKind::kHausdorff: return "hausdorff";
    case SetLossKind::kGreedy: return "greedy";
  }
  return "?";
}

namespace {

struct PartLoss {
  double value = 0.0;
  std::vector<std::pair<int, int>> pairs;
};

// e: extracted (meters), r: reconstructed (meters); accumulates d/dr into grad.
PartLoss part_loss(std::span<const double> e, std::span<const double> r,
                   SetLossKind kind, double beta, std::span<double> grad) {
  PartLoss out;
  const int n = static_cast<int>(e.size());
  const int m = static_cast<int>(r.size());
  if (n == 0) return out;
  const auto eu = [&](int j) { return e[static_cast<std::size_t>(j)]; };
  const auto ru = [&](int i) { return r[static_cast<std::size_t>(i)]; };

  const auto add_pairs = [&](const std::vector<std::pair<int, int>>& pairs) {
    for (auto [j, i] : pairs) {
      const SmoothL1 l = smooth_l1(ru(i) - eu(j), beta);
      out.value += l.value / n;
      grad[static_cast<std::size_t>(i)] += l.derivative / n;
    }
    out.pairs = pairs;
  };

  switch (kind) {
    case SetLossKind::kHungarian: {
      CostMatrix c = CostMatrix::zeros(n, m);
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < m; ++i) c(j, i) = smooth_l1(ru(i) - eu(j), beta).value;
      }
      add_pairs(hungarian(c).pairs);
      break;
    }
    case SetLossKind::kGreedy: {
      std::vector<int> ri(static_cast<std::size_t>(m));
      std::iota(ri.begin(), ri.end(), 0);
      std::stable_sort(ri.begin(), ri.end(), [&](int a, int b) { return ru(a) < ru(b); });
      std::vector<int> ej(static_cast<std::size_t>(n));
      std::iota(ej.begin(), ej.end(), 0);
      std::stable_sort(ej.begin(), ej.end(), [&](int a, int b) { return eu(a) < eu(b); });
      std::vector<std::pair<int, int>> pairs;
      for (int k = 0; k < n; ++k) pairs.emplace_back(ej[static_cast<std::size_t>(k)], ri[static_cast<std::size_t>(k)]);
      std::sort(pairs.begin(), pairs.end());
      add_pairs(pairs);
      break;
    }
    case SetLossKind::kChamfer: {
      for (int j = 0; j < n; ++j) {
        int best = 0;
        SmoothL1 bl = smooth_l1(ru(0) - eu(j), beta);
        for (int i = 1; i < m; ++i) {
          const SmoothL1 l = smooth_l1(ru(i) - eu(j), beta);
          if (l.value < bl.value) {
            bl = l;
            best = i;
          }
        }
        out.value += bl.value / n;
        grad[static_cast<std::size_t>(best)] += bl.derivative / n;
      }
      for (int i = 0; i < m; ++i) {
        SmoothL1 bl = smooth_l1(ru(i) - eu(0), beta);
        for (int j = 1; j < n; ++j) {
          const SmoothL1 l = smooth_l1(ru(i) - eu(j), beta);
          if (l.value < bl.value) bl = l;
        }
        out.value += bl.value / m;
        grad[static_cast<std::size_t>(i)] += bl.derivative / m;
      }
      break;
    }
    case SetLossKind::kHausdorff: {
      double worst = -1.0;
      int worst_i = 0;
      double worst_d = 0.0;
      for (int j = 0; j < n; ++j) {
        int best = 0;
        SmoothL1 bl = smooth_l1(ru(0) - eu(j), beta);
        for (int i = 1; i < m; ++i) {
          const SmoothL1 l = smooth_l1(ru(i) - eu(j), beta);
          if (l.value < bl.value) {
            bl = l;
            best = i;
          }
        }
        if (bl.value > worst) {
          worst = bl.value;
          worst_i = best;
          worst_d = bl.derivative;
        }
      }
      for (int i = 0; i < m; ++i) {
        SmoothL1 bl = smooth_l1(ru(i) - eu(0), beta);
        for (int j = 1; j < n; ++j) {
          const SmoothL1 l = smooth_l1(ru(i) - eu(j), beta);
          if (l.value < bl.value) bl = l;
        }
        if (bl.value > worst) {
          worst = bl.value;
          worst_i = i;
          worst_d = bl.derivative;
        }
      }
      out.value = worst;
      grad[static_cast<std::size_t>(worst_i)] += worst_d;
      break;
    }
  }
  return out;
}

}  // namespace

SetLossResult set_loss(const superres::FeatureSet& extracted,
                       std::span<const double> reconstructed, SetLossKind kind,
                       bool los_decomposition, double beta) {
  const int n = static_cast<int>(extracted.size());
  const int m = static_cast<int>(reconstructed.size());
  if (n == 0) throw ConfigError("set_loss: empty extracted set");
  if (n > m) throw ConfigError("set_loss: more extracted delays than reconstructed");
  if (!(beta > 0.0)) throw ConfigError("set_loss: beta must be > 0");

  std::vector<double> e(extracted.values.begin(), extracted.values.end());
  std::vector<double> r(reconstructed.begin(), reconstructed.end());
  for (double& x : e) x *= kSpeedOfLight;
  for (double& x : r) x *= kSpeedOfLight;

  SetLossResult res;
  std::vector<double> grad(static_cast<std::size_t>(m), 0.0);
  const bool tdoa = extracted.modality == Modality::kTDoA;

  if (tdoa || los_decomposition) {
    res.assignment.pairs.emplace_back(0, 0);
    const std::span<const double> e_rest(e.data() + 1, e.size() - 1);
    const std::span<const double> r_rest(r.data() + 1, r.size() - 1);
    const std::span<double> g_rest(grad.data() + 1, grad.size() - 1);
    PartLoss rest;
    if (!e_rest.empty()) rest = part_loss(e_rest, r_rest, kind, beta, g_rest);
    if (tdoa) {
      res.loss.value = rest.value;
    } else {
      // Pairwise mean over all n pairs (LOS included).
      const SmoothL1 los = smooth_l1(r[0] - e[0], beta);
      const double w_rest = static_cast<double>(n - 1) / n;
      res.loss.value = los.value / n + w_rest * rest.value;
      for (std::size_t i = 1; i < grad.size(); ++i) grad[i] *= w_rest;
      grad[0] += los.derivative / n;
    }
    for (auto [j, i] : rest.pairs) res.assignment.pairs.emplace_back(j + 1, i + 1);
  } else {
    PartLoss all = part_loss(e, r, kind, beta, grad);
    res.loss.value = all.value;
    res.assignment.pairs = std::move(all.pairs);
  }
  for (auto [j, i] : res.assignment.pairs) {
    res.assignment.total_cost += smooth_l1(r[static_cast<std::size_t>(i)] - e[static_cast<std::size_t>(j)], beta).value;
  }
  for (double& g : grad) g *= kSpeedOfLight;
  res.loss.gradient = std::move(grad);
  return res;
}

}  // namespace rfslam::matchloss
