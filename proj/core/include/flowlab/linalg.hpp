#pragma once

#include <span>

#include <Eigen/Core>

namespace flowlab {

/// A list of points in R^d stored column-wise (d x n).
using Points = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Symmetric square root via eigendecomposition; eigenvalues are floored at `floor`.
Mat sqrtm_spd(const Mat& s, double floor = 1e-12);
Mat inv_sqrtm_spd(const Mat& s, double floor = 1e-12);

/// log(sum(exp(v))) without overflow. Returns -inf for an empty or all -inf input.
double log_sum_exp(const Vec& v);

/// Normalised softmax weights exp(v - lse(v)); entries below `drop` are set to zero.
Vec softmax(const Vec& v, double drop = 0.0);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

/// Lexicographic strict order on vectors with exact floating-point comparison.
struct ExactVecLess {
  bool operator()(const Vec& a, const Vec& b) const;
};

/// Sum of squared row differences: ||a - b||^2.
inline double squared_distance(const Eigen::Ref<const Vec>& a, const Eigen::Ref<const Vec>& b) {
  return (a - b).squaredNorm();
}

/// Pairwise squared Euclidean cost C(i, j) = ||x_i - y_j||^2 for column point sets.
Mat squared_cost_matrix(const Points& x, const Points& y);

}  // namespace flowlab
