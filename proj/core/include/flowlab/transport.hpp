#pragma once

#include <vector>

#include "flowlab/measures.hpp"

namespace flowlab {

/// x -> A x + b.
struct AffineMap {
  Mat a;
  Vec b;

  Vec operator()(const Vec& x) const { return a * x + b; }
  Eigen::Index dim() const { return b.size(); }
};

struct OtResult {
  /// Total squared-distance cost sum_k w_k ||x_k - y_k||^2.
  double cost = 0.0;
  DiscretePlan plan;
};

struct Assignment {
  /// perm[i] is the index of the y matched to x_i.
  std::vector<int> perm;
  /// Mean squared distance of the matching (W2^2 of the uniform empirical measures).
  double cost = 0.0;
};

/// Exact min-cost perfect matching for a square cost matrix (Hungarian method,
/// O(n^3)). Ties resolve towards the lowest column index.
std::vector<int> hungarian(const Mat& cost);

Assignment solve_assignment(const Points& x, const Points& y);

/// Balanced transportation problem min <C, P> s.t. P 1 = a, P^T 1 = b, P >= 0,
/// solved exactly by the transportation simplex (spanning-tree bases, MODI pricing).
/// Returns the optimal flow matrix.
Mat solve_transportation(const Vec& a, const Vec& b, const Mat& cost);

constexpr Eigen::Index kMaxExactAtoms = 512;

OtResult solve_discrete_ot(const DiscreteMeasure& mu, const DiscreteMeasure& nu);
double w2(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// W2 between two equally sized uniform point clouds (exact assignment).
double w2_empirical(const Points& x, const Points& y);
/// W2 between equally sized 1-D samples via sorting.
double w2_sorted_1d(Vec a, Vec b);

/// Monge map between Gaussians:
/// T(x) = m_nu + A (x - m_mu), A = S^{-1/2} (S^{1/2} T S^{1/2})^{1/2} S^{-1/2}.
AffineMap gaussian_monge_map(const GaussianMeasure& mu, const GaussianMeasure& nu);

struct WBetaResult {
  /// Optimal cost in the metric beta |w1 - w2|^2 + |x1 - x2|^2.
  double cost = 0.0;
  /// Condition displacement sum_k w_k ||w1_k - w2_k||^2 of the optimal plan.
  double w_mass = 0.0;
  /// Optimal plan in the original (unscaled) coordinates.
  DiscretePlan plan;
};

/// Measures live on R^{m+d}; the first m coordinates are the condition block.
WBetaResult w_beta(const DiscreteMeasure& mu, const DiscreteMeasure& nu, Eigen::Index m, double beta);

/// Conditional Wasserstein distance for measures whose first-block marginals
/// both equal eta (exact atom equality); sqrt(sum_w eta(w) W2^2(mu^w, nu^w)).
double cond_w2(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const DiscreteMeasure& eta);

/// The measure e_t # plan with e_t(x, y) = (1 - t) x + t y; coincident atoms merged.
DiscreteMeasure geodesic_point(const DiscretePlan& plan, double t);

}  // namespace flowlab
