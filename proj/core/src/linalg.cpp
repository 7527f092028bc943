#include "flowlab/linalg.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace flowlab {

namespace {
Mat spectral_power(const Mat& s, double floor, double power) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (s + s.transpose()));
  Vec lambda = eig.eigenvalues().cwiseMax(floor);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda[i] = std::pow(lambda[i], power);
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}
}  // namespace

Mat sqrtm_spd(const Mat& s, double floor) { return spectral_power(s, floor, 0.5); }

Mat inv_sqrtm_spd(const Mat& s, double floor) { return spectral_power(s, floor, -0.5); }

double log_sum_exp(const Vec& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Vec softmax(const Vec& v, double drop) {
  if (v.size() == 0) return v;
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return Vec::Constant(v.size(), std::numeric_limits<double>::quiet_NaN());
  Vec w = (v.array() - top).exp();
  w /= w.sum();
  if (drop > 0.0) {
    for (Eigen::Index i = 0; i < w.size(); ++i)
      if (w[i] < drop) w[i] = 0.0;
    const double s = w.sum();
    if (s > 0.0) w /= s;
  }
  return w;
}

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }

bool ExactVecLess::operator()(const Vec& a, const Vec& b) const {
  if (a.size() != b.size()) return a.size() < b.size();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (b[i] < a[i]) return false;
  }
  return false;
}

Mat squared_cost_matrix(const Points& x, const Points& y) {
  Mat c(x.cols(), y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    for (Eigen::Index i = 0; i < x.cols(); ++i) c(i, j) = (x.col(i) - y.col(j)).squaredNorm();
  return c;
}

}  // namespace flowlab
