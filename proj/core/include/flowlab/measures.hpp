#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "flowlab/linalg.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

/// N(mean, cov) with cov symmetric positive definite.
///
/// The Cholesky factor is computed at construction; failure throws
/// ValidationError. Diagonal covariances take an elementwise fast path.
class GaussianMeasure {
 public:
  GaussianMeasure(Vec mean, Mat cov);
  static GaussianMeasure standard(Eigen::Index d);
  static GaussianMeasure isotropic(Vec mean, double variance);

  Eigen::Index dim() const { return mean_.size(); }
  const Vec& mean() const { return mean_; }
  const Mat& cov() const { return cov_; }
  bool is_diagonal() const { return diagonal_; }
  /// Lower Cholesky factor L with L L^T = cov.
  const Mat& chol() const { return chol_; }
  double log_det() const { return log_det_; }

  double log_density(const Vec& x) const;
  Vec score(const Vec& x) const;
  /// cov^{-1} v.
  Vec solve(const Vec& v) const;
  Mat precision() const;

  Vec sample(Rng& rng) const;

 private:
  Vec mean_;
  Mat cov_;
  Mat chol_;
  Vec diag_;
  double log_det_ = 0.0;
  bool diagonal_ = false;
};

/// Finite Gaussian mixture sum_k w_k N(m_k, S_k).
class GmmMeasure {
 public:
  GmmMeasure(Vec weights, std::vector<GaussianMeasure> components);

  Eigen::Index dim() const { return components_.front().dim(); }
  std::size_t size() const { return components_.size(); }
  const Vec& weights() const { return weights_; }
  const std::vector<GaussianMeasure>& components() const { return components_; }

  /// Log of w_k N(x; m_k, S_k) per component.
  Vec component_log_densities(const Vec& x) const;
  /// Posterior component probabilities; values below exp(-745) are zeroed.
  Vec responsibilities(const Vec& x) const;
  double log_density(const Vec& x) const;
  Vec score(const Vec& x) const;

  Vec mean() const;
  Mat cov() const;

  Vec sample(Rng& rng) const;

 private:
  Vec weights_;
  std::vector<GaussianMeasure> components_;
};

/// sum_i w_i delta_{x_i}; points stored column-wise.
class DiscreteMeasure {
 public:
  DiscreteMeasure(Points points, Vec weights);
  static DiscreteMeasure uniform(Points points);
  static DiscreteMeasure dirac(Vec point);

  Eigen::Index dim() const { return points_.rows(); }
  Eigen::Index size() const { return points_.cols(); }
  const Points& points() const { return points_; }
  const Vec& weights() const { return weights_; }
  Vec point(Eigen::Index i) const { return points_.col(i); }
  double weight(Eigen::Index i) const { return weights_[i]; }

  /// Atoms at exactly equal coordinates are merged (first-occurrence order kept).
  DiscreteMeasure merged() const;
  Vec mean() const;

 private:
  Points points_;
  Vec weights_;
};

/// Coupling sum_k w_k delta_{(x_k, y_k)} between two discrete measures.
class DiscretePlan {
 public:
  DiscretePlan(Points x, Points y, Vec weights);

  Eigen::Index size() const { return x_.cols(); }
  Eigen::Index dim_x() const { return x_.rows(); }
  Eigen::Index dim_y() const { return y_.rows(); }
  const Points& x() const { return x_; }
  const Points& y() const { return y_; }
  const Vec& weights() const { return w_; }

  DiscreteMeasure first_marginal() const;
  DiscreteMeasure second_marginal() const;
  /// sum_k w_k ||x_k - y_k||^2 (requires equal dimensions).
  double cost() const;
  /// Drops atoms with zero weight.
  DiscretePlan pruned() const;

 private:
  Points x_;
  Points y_;
  Vec w_;
};

using Measure = std::variant<GaussianMeasure, GmmMeasure, DiscreteMeasure>;

Eigen::Index dim(const Measure& m);

/// n i.i.d. draws as a d x n matrix. GMM draws pick a component, then a Gaussian.
Points sample(const Measure& measure, Eigen::Index n, Rng& rng);
/// Convenience overload drawing from the stream (seed, "sample").
Points sample(const Measure& measure, Eigen::Index n, Seed seed);

/// Log density and score; only for Gaussian and GMM measures.
double log_density(const Measure& measure, const Vec& x);
Vec score(const Measure& measure, const Vec& x);

/// Push-forward through x -> A x + b. Density-carrying measures require A square
/// and invertible ("non-invertible affine push-forward" otherwise).
Measure pushforward_affine(const Measure& measure, const Mat& a, const Vec& b);

struct Disintegration {
  /// First marginal with merged atoms.
  DiscreteMeasure marginal;
  /// kernel[i] is the conditional law of y given x = marginal.point(i).
  std::vector<DiscreteMeasure> kernel;
};

Disintegration disintegrate_discrete(const DiscretePlan& plan);

/// Independent coupling with atoms (x_i, y_j, mu_i nu_j), row-major in (i, j).
DiscretePlan product_plan(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1);

}  // namespace flowlab
