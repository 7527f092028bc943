#include "flowlab/score.hpp"

#include <cmath>

#include "flowlab/error.hpp"

namespace flowlab {

VpSchedule::VpSchedule(double bmin, double bmax, double T) : beta_min(bmin), beta_max(bmax), horizon(T) {
  require(bmin > 0.0 && bmax > bmin, "VpSchedule: need 0 < beta_min < beta_max");
  require(T > 0.0, "VpSchedule: horizon must be positive");
}

double VpSchedule::beta(double t) const { return beta_min + (t / horizon) * (beta_max - beta_min); }

double VpSchedule::h(double t) const { return beta_min * t + 0.5 * (beta_max - beta_min) * t * t / horizon; }

double VpSchedule::b(double t) const { return std::exp(-0.5 * h(t)); }

double VpSchedule::sigma(double t) const { return std::sqrt(-std::expm1(-h(t))); }

GmmMeasure vp_marginal(const GmmMeasure& prior, const VpSchedule& s, double t) {
  const double bt = s.b(t);
  const double var = -std::expm1(-s.h(t));
  std::vector<GaussianMeasure> comps;
  comps.reserve(prior.size());
  for (const auto& c : prior.components()) {
    Mat cov = bt * bt * c.cov();
    cov.diagonal().array() += var;
    comps.emplace_back(bt * c.mean(), std::move(cov));
  }
  return GmmMeasure(prior.weights(), std::move(comps));
}

Vec score_at(const ScoreSource& src, const VpSchedule& s, double t, const Vec& x) {
  if (const auto* a = std::get_if<AnalyticGmmScore>(&src)) return vp_marginal(a->prior, s, t).score(x);
  if (const auto* n = std::get_if<NeuralScore>(&src)) {
    Vec out = n->net->forward(t, x);
    if (n->scaled) out /= s.sigma(t);
    return out;
  }
  return std::get<CallbackScore>(src).fn(t, x);
}

Points score_batch(const ScoreSource& src, const VpSchedule& s, double t, const Points& x) {
  if (const auto* n = std::get_if<NeuralScore>(&src)) {
    Points out = n->net->forward_batch(Vec::Constant(1, t), x);
    if (n->scaled) out /= s.sigma(t);
    return out;
  }
  Points out(x.rows(), x.cols());
  if (const auto* a = std::get_if<AnalyticGmmScore>(&src)) {
    const GmmMeasure marg = vp_marginal(a->prior, s, t);
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = marg.score(x.col(j));
    return out;
  }
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = score_at(src, s, t, x.col(j));
  return out;
}

}  // namespace flowlab
