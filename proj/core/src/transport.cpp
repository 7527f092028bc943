#include "flowlab/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "flowlab/error.hpp"

namespace flowlab {

std::vector<int> hungarian(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  require(cost.cols() == cost.rows(), "hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
  std::vector<int> perm(n);
  for (int j = 1; j <= n; ++j) perm[p[j] - 1] = j - 1;
  return perm;
}

Assignment solve_assignment(const Points& x, const Points& y) {
  require(x.cols() == y.cols(), "solve_assignment: point sets must have equal size");
  require(x.cols() >= 1, "solve_assignment: empty point sets");
  require(x.rows() == y.rows(), "solve_assignment: dimension mismatch");
  Assignment out;
  out.perm = hungarian(squared_cost_matrix(x, y));
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.cols(); ++i) total += (x.col(i) - y.col(out.perm[static_cast<std::size_t>(i)])).squaredNorm();
  out.cost = total / static_cast<double>(x.cols());
  return out;
}

namespace {

struct Cell {
  int i;
  int j;
};

// Initial basic feasible solution by the matrix-minimum rule. Exactly n+m-1
// cells are produced (degenerate zeros included), forming a spanning tree.
void initial_basis(const Vec& a, const Vec& b, const Mat& c, std::vector<Cell>& cells, std::vector<double>& flow) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  std::vector<int> order(static_cast<std::size_t>(n) * static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int p, int q) { return c(p / m, p % m) < c(q / m, q % m); });
  Vec ra = a;
  Vec rb = b;
  std::vector<char> row_done(n, 0), col_done(m, 0);
  int rows_left = n;
  int cols_left = m;
  for (int idx : order) {
    const int i = idx / m;
    const int j = idx % m;
    if (row_done[i] || col_done[j]) continue;
    const double x = std::min(ra[i], rb[j]);
    cells.push_back({i, j});
    flow.push_back(x);
    if (rows_left == 1 && cols_left == 1) break;
    const bool cross_row = cols_left == 1 || (rows_left > 1 && ra[i] <= rb[j]);
    if (cross_row) {
      rb[j] = std::max(rb[j] - ra[i], 0.0);
      ra[i] = 0.0;
      row_done[i] = 1;
      --rows_left;
    } else {
      ra[i] = std::max(ra[i] - rb[j], 0.0);
      rb[j] = 0.0;
      col_done[j] = 1;
      --cols_left;
    }
  }
}

}  // namespace

Mat solve_transportation(const Vec& a, const Vec& b, const Mat& cost) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  require(n >= 1 && m >= 1, "solve_transportation: empty marginal");
  require(cost.rows() == n && cost.cols() == m, "solve_transportation: cost shape mismatch");
  require(std::abs(a.sum() - b.sum()) <= 1e-10, "solve_transportation: unbalanced marginals");

  std::vector<Cell> cells;
  std::vector<double> flow;
  initial_basis(a, b, cost, cells, flow);
  const int nodes = n + m;
  require(static_cast<int>(cells.size()) == nodes - 1, "solve_transportation: degenerate initial basis");

  // Node ids: rows 0..n-1, columns n..n+m-1.
  std::vector<std::vector<int>> adj(nodes);
  for (int s = 0; s < static_cast<int>(cells.size()); ++s) {
    adj[cells[s].i].push_back(s);
    adj[n + cells[s].j].push_back(s);
  }
  auto other = [&](int s, int node) { return node < n ? n + cells[s].j : cells[s].i; };
  auto unlink = [&](int node, int s) {
    auto& v = adj[node];
    v.erase(std::find(v.begin(), v.end(), s));
  };

  const double tol = 1e-12 * cost.cwiseAbs().maxCoeff();
  Vec pot(nodes);
  std::vector<int> parent_slot(nodes);
  std::vector<int> queue(nodes);
  std::vector<char> seen(nodes);
  const long max_iter = 100L * n * m + 1000;

  for (long iter = 0;; ++iter) {
    if (iter > max_iter) throw NumericalError("transportation simplex failed to converge");

    // Potentials u_i + v_j = c_ij on the basis tree, rooted at row 0.
    std::fill(seen.begin(), seen.end(), 0);
    pot[0] = 0.0;
    seen[0] = 1;
    int head = 0, tail = 0;
    queue[tail++] = 0;
    while (head < tail) {
      const int node = queue[head++];
      for (int s : adj[node]) {
        const int o = other(s, node);
        if (seen[o]) continue;
        seen[o] = 1;
        pot[o] = cost(cells[s].i, cells[s].j) - pot[node];
        queue[tail++] = o;
      }
    }

    double best = -tol;
    int ei = -1, ej = -1;
    for (int i = 0; i < n; ++i) {
      const double ui = pot[i];
      for (int j = 0; j < m; ++j) {
        const double r = cost(i, j) - ui - pot[n + j];
        if (r < best) {
          best = r;
          ei = i;
          ej = j;
        }
      }
    }
    if (ei < 0) break;

    // Tree path from column ej back to row ei.
    std::fill(seen.begin(), seen.end(), 0);
    head = tail = 0;
    queue[tail++] = ei;
    seen[ei] = 1;
    parent_slot[ei] = -1;
    while (head < tail && !seen[n + ej]) {
      const int node = queue[head++];
      for (int s : adj[node]) {
        const int o = other(s, node);
        if (seen[o]) continue;
        seen[o] = 1;
        parent_slot[o] = s;
        queue[tail++] = o;
      }
    }
    std::vector<int> path;
    for (int node = n + ej; node != ei;) {
      const int s = parent_slot[node];
      path.push_back(s);
      node = other(s, node);
    }

    // Odd positions along the path (0, 2, ...) lose flow.
    int leave = -1;
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const int s = path[k];
      const bool better = flow[s] < theta ||
                          (flow[s] == theta && (cells[s].i < cells[leave].i ||
                                                (cells[s].i == cells[leave].i && cells[s].j < cells[leave].j)));
      if (better) {
        theta = flow[s];
        leave = s;
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) {
      if (k % 2 == 0)
        flow[path[k]] = path[k] == leave ? 0.0 : std::max(flow[path[k]] - theta, 0.0);
      else
        flow[path[k]] += theta;
    }
    unlink(cells[leave].i, leave);
    unlink(n + cells[leave].j, leave);
    cells[leave] = {ei, ej};
    flow[leave] = theta;
    adj[ei].push_back(leave);
    adj[n + ej].push_back(leave);
  }

  Mat plan = Mat::Zero(n, m);
  for (std::size_t s = 0; s < cells.size(); ++s) plan(cells[s].i, cells[s].j) += flow[s];
  return plan;
}

namespace {

void check_exact_regime(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.size() > kMaxExactAtoms || nu.size() > kMaxExactAtoms)
    throw ValidationError("support too large for exact solver");
}

DiscretePlan plan_from_flow(const Points& x, const Points& y, const Mat& flow) {
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < flow.rows(); ++i)
    for (Eigen::Index j = 0; j < flow.cols(); ++j)
      if (flow(i, j) > 0.0) ++k;
  Points px(x.rows(), k), py(y.rows(), k);
  Vec w(k);
  k = 0;
  for (Eigen::Index i = 0; i < flow.rows(); ++i)
    for (Eigen::Index j = 0; j < flow.cols(); ++j)
      if (flow(i, j) > 0.0) {
        px.col(k) = x.col(i);
        py.col(k) = y.col(j);
        w[k] = flow(i, j);
        ++k;
      }
  w /= w.sum();
  return DiscretePlan(std::move(px), std::move(py), std::move(w));
}

double flow_cost(const Mat& flow, const Mat& cost) {
  double c = 0.0;
  for (Eigen::Index i = 0; i < flow.rows(); ++i)
    for (Eigen::Index j = 0; j < flow.cols(); ++j)
      if (flow(i, j) > 0.0) c += flow(i, j) * cost(i, j);
  return c;
}

}  // namespace

OtResult solve_discrete_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  require(mu.dim() == nu.dim(), "solve_discrete_ot: dimension mismatch");
  check_exact_regime(mu, nu);
  const Mat c = squared_cost_matrix(mu.points(), nu.points());
  const Mat flow = solve_transportation(mu.weights(), nu.weights(), c);
  return {flow_cost(flow, c), plan_from_flow(mu.points(), nu.points(), flow)};
}

double w2(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  return std::sqrt(std::max(solve_discrete_ot(mu, nu).cost, 0.0));
}

double w2_empirical(const Points& x, const Points& y) {
  return std::sqrt(std::max(solve_assignment(x, y).cost, 0.0));
}

double w2_sorted_1d(Vec a, Vec b) {
  require(a.size() == b.size() && a.size() >= 1, "w2_sorted_1d: samples must be nonempty and equally sized");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

AffineMap gaussian_monge_map(const GaussianMeasure& mu, const GaussianMeasure& nu) {
  require(mu.dim() == nu.dim(), "gaussian_monge_map: dimension mismatch");
  const Mat s_half = sqrtm_spd(mu.cov());
  const Mat s_inv_half = inv_sqrtm_spd(mu.cov());
  const Mat mid = sqrtm_spd(s_half * nu.cov() * s_half);
  Mat a = s_inv_half * mid * s_inv_half;
  a = 0.5 * (a + a.transpose());
  return {a, nu.mean() - a * mu.mean()};
}

WBetaResult w_beta(const DiscreteMeasure& mu, const DiscreteMeasure& nu, Eigen::Index m, double beta) {
  require(beta > 0.0 && std::isfinite(beta), "w_beta: beta must be positive");
  require(mu.dim() == nu.dim(), "w_beta: dimension mismatch");
  require(m >= 0 && m <= mu.dim(), "w_beta: condition block larger than the space");
  check_exact_regime(mu, nu);
  const double s = std::sqrt(beta);
  Points px = mu.points(), py = nu.points();
  px.topRows(m) *= s;
  py.topRows(m) *= s;
  const Mat c = squared_cost_matrix(px, py);
  const Mat flow = solve_transportation(mu.weights(), nu.weights(), c);
  WBetaResult out{flow_cost(flow, c), 0.0, plan_from_flow(mu.points(), nu.points(), flow)};
  const Mat cw = squared_cost_matrix(mu.points().topRows(m), nu.points().topRows(m));
  out.w_mass = flow_cost(flow, cw);
  return out;
}

namespace {

// Fiber of a product-space measure over the condition value w: the d-block
// atoms whose first m coordinates equal w exactly, renormalised.
DiscreteMeasure fiber(const DiscreteMeasure& mu, const Vec& w) {
  const Eigen::Index m = w.size();
  const Eigen::Index d = mu.dim() - m;
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < mu.size(); ++k)
    if (mu.points().col(k).head(m) == w && mu.weight(k) > 0.0) idx.push_back(k);
  if (idx.empty()) throw ValidationError("measures not in P_η");
  Points p(d, static_cast<Eigen::Index>(idx.size()));
  Vec wt(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    p.col(static_cast<Eigen::Index>(r)) = mu.points().col(idx[r]).tail(d);
    wt[static_cast<Eigen::Index>(r)] = mu.weight(idx[r]);
  }
  wt /= wt.sum();
  return DiscreteMeasure(std::move(p), std::move(wt));
}

void check_condition_marginal(const DiscreteMeasure& mu, const DiscreteMeasure& eta) {
  const Eigen::Index m = eta.dim();
  const DiscreteMeasure marg = DiscreteMeasure(mu.points().topRows(m), mu.weights()).merged();
  const DiscreteMeasure e = eta.merged();
  if (marg.size() != e.size()) throw ValidationError("measures not in P_η");
  std::map<Vec, double, ExactVecLess> lookup;
  for (Eigen::Index k = 0; k < marg.size(); ++k) lookup.emplace(marg.point(k), marg.weight(k));
  for (Eigen::Index k = 0; k < e.size(); ++k) {
    auto it = lookup.find(e.point(k));
    if (it == lookup.end() || std::abs(it->second - e.weight(k)) > 1e-12) throw ValidationError("measures not in P_η");
  }
}

}  // namespace

double cond_w2(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const DiscreteMeasure& eta) {
  require(mu.dim() == nu.dim(), "cond_w2: dimension mismatch");
  const Eigen::Index m = eta.dim();
  require(m < mu.dim(), "cond_w2: condition block must leave a nonempty state block");
  check_condition_marginal(mu, eta);
  check_condition_marginal(nu, eta);
  const DiscreteMeasure e = eta.merged();
  double total = 0.0;
  for (Eigen::Index k = 0; k < e.size(); ++k) {
    if (e.weight(k) == 0.0) continue;
    const Vec w = e.point(k);
    total += e.weight(k) * solve_discrete_ot(fiber(mu, w), fiber(nu, w)).cost;
  }
  return std::sqrt(std::max(total, 0.0));
}

DiscreteMeasure geodesic_point(const DiscretePlan& plan, double t) {
  require(t >= 0.0 && t <= 1.0, "geodesic_point: t must lie in [0, 1]");
  require(plan.dim_x() == plan.dim_y(), "geodesic_point: plan spaces differ in dimension");
  Points p = (1.0 - t) * plan.x() + t * plan.y();
  return DiscreteMeasure(std::move(p), plan.weights()).merged();
}

}  // namespace flowlab
