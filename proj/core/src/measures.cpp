#include "flowlab/measures.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/LU>

#include "flowlab/error.hpp"

namespace flowlab {

namespace {

constexpr double kWeightTolerance = 1e-12;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_simplex(const Vec& w, const char* what) {
  require(w.size() >= 1, std::string(what) + ": empty weight vector");
  for (Eigen::Index i = 0; i < w.size(); ++i)
    require(std::isfinite(w[i]) && w[i] >= 0.0, std::string(what) + ": negative or non-finite weight");
  require(std::abs(w.sum() - 1.0) <= kWeightTolerance, std::string(what) + ": weights must sum to 1");
}

bool is_diagonal_matrix(const Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

// Merges columns with identical coordinates, accumulating weights. Order of first occurrence is kept.
std::pair<Points, Vec> merge_atoms(const Points& pts, const Vec& w) {
  std::map<Vec, Eigen::Index, ExactVecLess> seen;
  std::vector<Eigen::Index> first;
  std::vector<double> acc;
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    Vec p = pts.col(i);
    auto [it, inserted] = seen.try_emplace(std::move(p), static_cast<Eigen::Index>(first.size()));
    if (inserted) {
      first.push_back(i);
      acc.push_back(w[i]);
    } else {
      acc[static_cast<std::size_t>(it->second)] += w[i];
    }
  }
  Points out(pts.rows(), static_cast<Eigen::Index>(first.size()));
  Vec ow(static_cast<Eigen::Index>(first.size()));
  for (std::size_t k = 0; k < first.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = pts.col(first[k]);
    ow[static_cast<Eigen::Index>(k)] = acc[k];
  }
  return {out, ow};
}

}  // namespace

// ---------------------------------------------------------------- Gaussian

GaussianMeasure::GaussianMeasure(Vec mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  const Eigen::Index d = mean_.size();
  require(d >= 1, "GaussianMeasure: empty mean");
  require(cov_.rows() == d && cov_.cols() == d, "GaussianMeasure: covariance shape mismatch");
  require(mean_.allFinite() && cov_.allFinite(), "GaussianMeasure: non-finite parameters");
  require((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, cov_.cwiseAbs().maxCoeff()),
          "GaussianMeasure: covariance not symmetric");
  diagonal_ = is_diagonal_matrix(cov_);
  if (diagonal_) {
    diag_ = cov_.diagonal();
    require((diag_.array() > 0.0).all(), "GaussianMeasure: covariance not positive definite");
    chol_ = diag_.cwiseSqrt().asDiagonal();
    log_det_ = diag_.array().log().sum();
  } else {
    Eigen::LLT<Mat> llt(cov_);
    require(llt.info() == Eigen::Success, "GaussianMeasure: covariance not positive definite");
    chol_ = llt.matrixL();
    require((chol_.diagonal().array() > 0.0).all(), "GaussianMeasure: covariance not positive definite");
    log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  }
}

GaussianMeasure GaussianMeasure::standard(Eigen::Index d) {
  return GaussianMeasure(Vec::Zero(d), Mat::Identity(d, d));
}

GaussianMeasure GaussianMeasure::isotropic(Vec mean, double variance) {
  const Eigen::Index d = mean.size();
  return GaussianMeasure(std::move(mean), variance * Mat::Identity(d, d));
}

Vec GaussianMeasure::solve(const Vec& v) const {
  if (diagonal_) return v.cwiseQuotient(diag_);
  Vec z = chol_.triangularView<Eigen::Lower>().solve(v);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(z);
}

Mat GaussianMeasure::precision() const {
  if (diagonal_) return diag_.cwiseInverse().asDiagonal();
  const Eigen::Index d = dim();
  Mat inv(d, d);
  for (Eigen::Index j = 0; j < d; ++j) inv.col(j) = solve(Vec::Unit(d, j));
  return 0.5 * (inv + inv.transpose());
}

double GaussianMeasure::log_density(const Vec& x) const {
  const Vec r = x - mean_;
  double quad;
  if (diagonal_) {
    quad = (r.array().square() / diag_.array()).sum();
  } else {
    const Vec z = chol_.triangularView<Eigen::Lower>().solve(r);
    quad = z.squaredNorm();
  }
  return -0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det_ + quad);
}

Vec GaussianMeasure::score(const Vec& x) const { return -solve(x - mean_); }

Vec GaussianMeasure::sample(Rng& rng) const {
  const Vec z = rng.normal_vector(dim());
  if (diagonal_) return mean_ + diag_.cwiseSqrt().cwiseProduct(z);
  return mean_ + chol_ * z;
}

// --------------------------------------------------------------------- GMM

GmmMeasure::GmmMeasure(Vec weights, std::vector<GaussianMeasure> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  require(!components_.empty(), "GmmMeasure: needs at least one component");
  require(weights_.size() == static_cast<Eigen::Index>(components_.size()),
          "GmmMeasure: weight count does not match component count");
  check_simplex(weights_, "GmmMeasure");
  for (const auto& c : components_) require(c.dim() == components_.front().dim(), "GmmMeasure: mixed dimensions");
}

Vec GmmMeasure::component_log_densities(const Vec& x) const {
  Vec l(static_cast<Eigen::Index>(components_.size()));
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    l[i] = weights_[i] > 0.0 ? std::log(weights_[i]) + components_[k].log_density(x)
                             : -std::numeric_limits<double>::infinity();
  }
  return l;
}

Vec GmmMeasure::responsibilities(const Vec& x) const {
  // exp(-745) is the smallest positive double; anything below underflows to 0 anyway.
  return softmax(component_log_densities(x), std::exp(-745.0));
}

double GmmMeasure::log_density(const Vec& x) const { return log_sum_exp(component_log_densities(x)); }

Vec GmmMeasure::score(const Vec& x) const {
  const Vec r = responsibilities(x);
  Vec s = Vec::Zero(dim());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    if (r[i] > 0.0) s += r[i] * components_[k].score(x);
  }
  return s;
}

Vec GmmMeasure::mean() const {
  Vec m = Vec::Zero(dim());
  for (std::size_t k = 0; k < components_.size(); ++k)
    m += weights_[static_cast<Eigen::Index>(k)] * components_[k].mean();
  return m;
}

Mat GmmMeasure::cov() const {
  const Vec m = mean();
  Mat c = Mat::Zero(dim(), dim());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const Vec dm = components_[k].mean() - m;
    c += weights_[static_cast<Eigen::Index>(k)] * (components_[k].cov() + dm * dm.transpose());
  }
  return c;
}

Vec GmmMeasure::sample(Rng& rng) const { return components_[rng.categorical(weights_)].sample(rng); }

// ---------------------------------------------------------------- Discrete

DiscreteMeasure::DiscreteMeasure(Points points, Vec weights) : points_(std::move(points)), weights_(std::move(weights)) {
  require(points_.cols() >= 1, "DiscreteMeasure: empty point list");
  require(points_.cols() == weights_.size(), "DiscreteMeasure: point/weight count mismatch");
  require(points_.allFinite(), "DiscreteMeasure: non-finite point");
  check_simplex(weights_, "DiscreteMeasure");
}

DiscreteMeasure DiscreteMeasure::uniform(Points points) {
  const Eigen::Index n = points.cols();
  require(n >= 1, "DiscreteMeasure: empty point list");
  return DiscreteMeasure(std::move(points), Vec::Constant(n, 1.0 / static_cast<double>(n)));
}

DiscreteMeasure DiscreteMeasure::dirac(Vec point) {
  Points p = point;
  return DiscreteMeasure(std::move(p), Vec::Ones(1));
}

DiscreteMeasure DiscreteMeasure::merged() const {
  auto [p, w] = merge_atoms(points_, weights_);
  return DiscreteMeasure(std::move(p), std::move(w));
}

Vec DiscreteMeasure::mean() const { return points_ * weights_; }

// -------------------------------------------------------------------- Plan

DiscretePlan::DiscretePlan(Points x, Points y, Vec weights) : x_(std::move(x)), y_(std::move(y)), w_(std::move(weights)) {
  require(x_.cols() >= 1, "DiscretePlan: empty plan");
  require(x_.cols() == y_.cols() && x_.cols() == w_.size(), "DiscretePlan: atom count mismatch");
  require(x_.allFinite() && y_.allFinite(), "DiscretePlan: non-finite atom");
  check_simplex(w_, "DiscretePlan");
}

DiscreteMeasure DiscretePlan::first_marginal() const {
  auto [p, w] = merge_atoms(x_, w_);
  return DiscreteMeasure(std::move(p), std::move(w));
}

DiscreteMeasure DiscretePlan::second_marginal() const {
  auto [p, w] = merge_atoms(y_, w_);
  return DiscreteMeasure(std::move(p), std::move(w));
}

double DiscretePlan::cost() const {
  require(dim_x() == dim_y(), "DiscretePlan::cost: dimension mismatch");
  double c = 0.0;
  for (Eigen::Index k = 0; k < size(); ++k) c += w_[k] * (x_.col(k) - y_.col(k)).squaredNorm();
  return c;
}

DiscretePlan DiscretePlan::pruned() const {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < size(); ++k)
    if (w_[k] > 0.0) keep.push_back(k);
  Points x(dim_x(), static_cast<Eigen::Index>(keep.size()));
  Points y(dim_y(), static_cast<Eigen::Index>(keep.size()));
  Vec w(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    x.col(j) = x_.col(keep[i]);
    y.col(j) = y_.col(keep[i]);
    w[j] = w_[keep[i]];
  }
  return DiscretePlan(std::move(x), std::move(y), std::move(w));
}

// --------------------------------------------------------------- Measure ops

Eigen::Index dim(const Measure& m) {
  return std::visit([](const auto& v) { return v.dim(); }, m);
}

Points sample(const Measure& measure, Eigen::Index n, Rng& rng) {
  require(n >= 0, "sample: negative count");
  const Eigen::Index d = dim(measure);
  Points out(d, n);
  if (const auto* disc = std::get_if<DiscreteMeasure>(&measure)) {
    for (Eigen::Index j = 0; j < n; ++j)
      out.col(j) = disc->points().col(static_cast<Eigen::Index>(rng.categorical(disc->weights())));
  } else if (const auto* g = std::get_if<GaussianMeasure>(&measure)) {
    for (Eigen::Index j = 0; j < n; ++j) out.col(j) = g->sample(rng);
  } else {
    const auto& gmm = std::get<GmmMeasure>(measure);
    for (Eigen::Index j = 0; j < n; ++j) out.col(j) = gmm.sample(rng);
  }
  return out;
}

Points sample(const Measure& measure, Eigen::Index n, Seed seed) {
  Rng rng(seed, "sample");
  return sample(measure, n, rng);
}

double log_density(const Measure& measure, const Vec& x) {
  if (const auto* g = std::get_if<GaussianMeasure>(&measure)) return g->log_density(x);
  if (const auto* m = std::get_if<GmmMeasure>(&measure)) return m->log_density(x);
  throw ValidationError("log_density: discrete measures have no density");
}

Vec score(const Measure& measure, const Vec& x) {
  if (const auto* g = std::get_if<GaussianMeasure>(&measure)) return g->score(x);
  if (const auto* m = std::get_if<GmmMeasure>(&measure)) return m->score(x);
  throw ValidationError("score: discrete measures have no density");
}

namespace {
GaussianMeasure push_gaussian(const GaussianMeasure& g, const Mat& a, const Vec& b) {
  Mat c = a * g.cov() * a.transpose();
  c = 0.5 * (c + c.transpose());
  return GaussianMeasure(a * g.mean() + b, std::move(c));
}
}  // namespace

Measure pushforward_affine(const Measure& measure, const Mat& a, const Vec& b) {
  const Eigen::Index d = dim(measure);
  require(a.cols() == d && a.rows() == b.size(), "pushforward_affine: shape mismatch");
  if (const auto* disc = std::get_if<DiscreteMeasure>(&measure)) {
    Points p = (a * disc->points()).colwise() + b;
    return DiscreteMeasure(std::move(p), disc->weights());
  }
  if (a.rows() != a.cols() || Eigen::FullPivLU<Mat>(a).rank() < a.rows())
    throw ValidationError("non-invertible affine push-forward");
  if (const auto* g = std::get_if<GaussianMeasure>(&measure)) return push_gaussian(*g, a, b);
  const auto& gmm = std::get<GmmMeasure>(measure);
  std::vector<GaussianMeasure> comps;
  comps.reserve(gmm.size());
  for (const auto& c : gmm.components()) comps.push_back(push_gaussian(c, a, b));
  return GmmMeasure(gmm.weights(), std::move(comps));
}

Disintegration disintegrate_discrete(const DiscretePlan& plan) {
  std::map<Vec, Eigen::Index, ExactVecLess> index;
  std::vector<Eigen::Index> first;
  std::vector<std::vector<Eigen::Index>> members;
  for (Eigen::Index k = 0; k < plan.size(); ++k) {
    auto [it, inserted] = index.try_emplace(Vec(plan.x().col(k)), static_cast<Eigen::Index>(first.size()));
    if (inserted) {
      first.push_back(k);
      members.emplace_back();
    }
    members[static_cast<std::size_t>(it->second)].push_back(k);
  }
  const auto n = static_cast<Eigen::Index>(first.size());
  Points xs(plan.dim_x(), n);
  Vec mu(n);
  std::vector<DiscreteMeasure> kernel;
  kernel.reserve(first.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& idx = members[static_cast<std::size_t>(i)];
    xs.col(i) = plan.x().col(first[static_cast<std::size_t>(i)]);
    double mass = 0.0;
    for (auto k : idx) mass += plan.weights()[k];
    mu[i] = mass;
    Points ys(plan.dim_y(), static_cast<Eigen::Index>(idx.size()));
    Vec kw(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      ys.col(static_cast<Eigen::Index>(j)) = plan.y().col(idx[j]);
      kw[static_cast<Eigen::Index>(j)] = mass > 0.0 ? plan.weights()[idx[j]] / mass : 1.0 / static_cast<double>(idx.size());
    }
    // Renormalise away the last ulp of rounding so the row passes the simplex check.
    kw /= kw.sum();
    kernel.push_back(DiscreteMeasure(std::move(ys), std::move(kw)).merged());
  }
  return {DiscreteMeasure(std::move(xs), std::move(mu)), std::move(kernel)};
}

DiscretePlan product_plan(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1) {
  const Eigen::Index n = mu0.size();
  const Eigen::Index m = mu1.size();
  Points x(mu0.dim(), n * m);
  Points y(mu1.dim(), n * m);
  Vec w(n * m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::Index k = i * m + j;
      x.col(k) = mu0.points().col(i);
      y.col(k) = mu1.points().col(j);
      w[k] = mu0.weight(i) * mu1.weight(j);
    }
  }
  return DiscretePlan(std::move(x), std::move(y), std::move(w));
}

}  // namespace flowlab
