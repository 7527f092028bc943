#include "flowlab/fields.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "flowlab/error.hpp"

namespace flowlab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kDropWeight = 1e-300;

std::string fmt_t(double t) {
  std::ostringstream s;
  s << t;
  return s.str();
}

// Per-component quantities of a Gaussian mixture posterior over components.
struct MixtureTerms {
  Vec logits;  // full log of weight * component density
  Points s;    // component scores grad log N_k(x)
  Points g;    // component conditional velocities
  Vec trb;     // trace of d g_k / dx
};

double mixture_divergence(const MixtureTerms& m) {
  const Vec r = softmax(m.logits, kDropWeight);
  const Vec sbar = m.s * r;
  double div = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    if (r[k] == 0.0) continue;
    div += r[k] * (m.trb[k] + (m.s.col(k) - sbar).dot(m.g.col(k)));
  }
  return div;
}

MixtureTerms latent_terms(const LatentTarget& target, double t, const Vec& x, bool need_velocity) {
  MixtureTerms m;
  const auto d = static_cast<double>(x.size());
  if (const auto* disc = std::get_if<DiscreteMeasure>(&target)) {
    require(disc->dim() == x.size(), "gaussian latent field: dimension mismatch");
    if (!(t < 1.0)) throw ValidationError("density degenerate at t=1");
    require(t >= 0.0, "gaussian latent field: t must lie in [0, 1)");
    const double sig = 1.0 - t;
    const Eigen::Index n = disc->size();
    m.logits.resize(n);
    m.s.resize(x.size(), n);
    const double c0 = -0.5 * d * kLog2Pi - d * std::log(sig);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vec u = x - t * disc->points().col(j);
      const double w = disc->weight(j);
      m.logits[j] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) + c0 -
                    u.squaredNorm() / (2.0 * sig * sig);
      m.s.col(j) = -u / (sig * sig);
    }
    if (need_velocity) {
      m.g = (disc->points().colwise() - x) / sig;
      m.trb = Vec::Constant(n, -d / sig);
    }
    return m;
  }
  const auto& gmm = std::get<GmmMeasure>(target);
  require(gmm.dim() == x.size(), "gaussian latent field: dimension mismatch");
  require(t >= 0.0 && t <= 1.0, "gaussian latent field: t must lie in [0, 1]");
  const auto n = static_cast<Eigen::Index>(gmm.size());
  const Eigen::Index dim = x.size();
  m.logits.resize(n);
  m.s.resize(dim, n);
  if (need_velocity) {
    m.g.resize(dim, n);
    m.trb.resize(n);
  }
  const Mat eye = Mat::Identity(dim, dim);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& c = gmm.components()[static_cast<std::size_t>(k)];
    const Mat sk = (1.0 - t) * (1.0 - t) * eye + t * t * c.cov();
    Eigen::LLT<Mat> llt(sk);
    if (llt.info() != Eigen::Success) throw ValidationError("density degenerate at t=" + fmt_t(t));
    const Vec u = x - t * c.mean();
    const Vec sinv_u = llt.solve(u);
    const Mat l = llt.matrixL();
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    const double w = gmm.weights()[k];
    m.logits[k] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) - 0.5 * (d * kLog2Pi + logdet) -
                  0.5 * u.dot(sinv_u);
    m.s.col(k) = -sinv_u;
    if (need_velocity) {
      const Mat b = t * c.cov() - (1.0 - t) * eye;
      m.g.col(k) = c.mean() + b * sinv_u;
      m.trb[k] = (b * llt.solve(eye)).trace();
    }
  }
  return m;
}

MixtureTerms lipman_terms(const DiscreteMeasure& target, double r, double t, const Vec& x) {
  require(target.dim() == x.size(), "lipman field: dimension mismatch");
  require(r > 0.0 && r < 1.0, "lipman field: r must lie in (0, 1)");
  require(t >= 0.0 && t <= 1.0, "lipman field: t must lie in [0, 1]");
  const auto d = static_cast<double>(x.size());
  const double sig = 1.0 - r * t;
  const Eigen::Index n = target.size();
  MixtureTerms m;
  m.logits.resize(n);
  m.s.resize(x.size(), n);
  m.g.resize(x.size(), n);
  const double c0 = -0.5 * d * kLog2Pi - d * std::log(sig);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vec y = target.points().col(j);
    const Vec u = x - t * y;
    const double w = target.weight(j);
    m.logits[j] =
        (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) + c0 - u.squaredNorm() / (2.0 * sig * sig);
    m.s.col(j) = -u / (sig * sig);
    m.g.col(j) = (y - r * x) / sig;
  }
  m.trb = Vec::Constant(n, -r * d / sig);
  return m;
}

Vec mixture_mean(const MixtureTerms& m, const Points& cols) {
  return cols * softmax(m.logits, kDropWeight);
}

int reversal_depth(const VelocityField*& f) {
  int depth = 0;
  while (const auto* r = std::get_if<ReversedField>(&f->variant())) {
    f = r->inner.get();
    ++depth;
  }
  return depth;
}

// Pre-computed view of a GMM score source at one time, for divergence.
double analytic_score_trace(const GmmMeasure& marg, const Vec& x) {
  const auto n = static_cast<Eigen::Index>(marg.size());
  const Vec r = marg.responsibilities(x);
  Vec sbar = Vec::Zero(x.size());
  Points s(x.size(), n);
  double tr = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& c = marg.components()[static_cast<std::size_t>(k)];
    s.col(k) = c.score(x);
    sbar += r[k] * s.col(k);
    if (r[k] > 0.0) tr -= r[k] * c.precision().trace();
  }
  for (Eigen::Index k = 0; k < n; ++k)
    if (r[k] > 0.0) tr += r[k] * s.col(k).squaredNorm();
  return tr - sbar.squaredNorm();
}

}  // namespace

// ------------------------------------------------------------- VelocityField

Vec VelocityField::eval(double t, const Vec& x) const {
  const VelocityField* f = this;
  const int depth = reversal_depth(f);
  if (depth % 2 == 1) {
    Vec v = f->eval(1.0 - t, x);
    return -v;
  }
  if (f != this) return f->eval(t, x);
  return std::visit(
      [&](const auto& fld) -> Vec {
        using T = std::decay_t<decltype(fld)>;
        if constexpr (std::is_same_v<T, PlanField>) {
          return plan_velocity(fld.plan, t, x);
        } else if constexpr (std::is_same_v<T, GaussianLatentField>) {
          return gaussian_latent_velocity(fld.target, t, x);
        } else if constexpr (std::is_same_v<T, LipmanField>) {
          return lipman_marginal_velocity(fld.target, fld.r, t, x);
        } else if constexpr (std::is_same_v<T, MapField>) {
          return map_velocity(fld.map, t, x);
        } else if constexpr (std::is_same_v<T, ScoreField>) {
          return prob_flow_velocity(fld.source, fld.schedule, t, x);
        } else if constexpr (std::is_same_v<T, NeuralField>) {
          return fld.net->forward(t, x, fld.cond);
        } else if constexpr (std::is_same_v<T, ReversedField>) {
          return -fld.inner->eval(1.0 - t, x);
        } else {
          return fld.fn(t, x);
        }
      },
      v_);
}

Points VelocityField::eval_batch(double t, const Points& x) const {
  const VelocityField* f = this;
  const int depth = reversal_depth(f);
  if (depth % 2 == 1) return -f->eval_batch(1.0 - t, x);
  if (const auto* nf = std::get_if<NeuralField>(&f->variant())) {
    const Points w = nf->cond.size() > 0 ? Points(nf->cond) : Points();
    return nf->net->forward_batch(Vec::Constant(1, t), x, w);
  }
  if (const auto* sf = std::get_if<ScoreField>(&f->variant())) {
    const Points s = score_batch(sf->source, sf->schedule, t, x);
    return -0.5 * sf->schedule.beta(t) * (x + s);
  }
  Points out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = f->eval(t, x.col(j));
  return out;
}

bool VelocityField::has_divergence() const {
  const VelocityField* f = this;
  reversal_depth(f);
  return std::visit(
      [](const auto& fld) -> bool {
        using T = std::decay_t<decltype(fld)>;
        if constexpr (std::is_same_v<T, PlanField>) return false;
        else if constexpr (std::is_same_v<T, CallbackField>) return static_cast<bool>(fld.div);
        else if constexpr (std::is_same_v<T, ScoreField>) return !std::holds_alternative<CallbackScore>(fld.source);
        else return true;
      },
      f->variant());
}

double VelocityField::divergence(double t, const Vec& x) const {
  const VelocityField* f = this;
  const int depth = reversal_depth(f);
  if (depth % 2 == 1) return -f->divergence(1.0 - t, x);
  return std::visit(
      [&](const auto& fld) -> double {
        using T = std::decay_t<decltype(fld)>;
        if constexpr (std::is_same_v<T, PlanField>) {
          throw ValidationError("plan-induced fields have no divergence");
        } else if constexpr (std::is_same_v<T, GaussianLatentField>) {
          return gaussian_latent_divergence(fld.target, t, x);
        } else if constexpr (std::is_same_v<T, LipmanField>) {
          return lipman_marginal_divergence(fld.target, fld.r, t, x);
        } else if constexpr (std::is_same_v<T, MapField>) {
          return map_divergence(fld.map, t);
        } else if constexpr (std::is_same_v<T, ScoreField>) {
          const double beta = fld.schedule.beta(t);
          const auto d = static_cast<double>(x.size());
          if (const auto* a = std::get_if<AnalyticGmmScore>(&fld.source))
            return -0.5 * beta * (d + analytic_score_trace(vp_marginal(a->prior, fld.schedule, t), x));
          if (const auto* n = std::get_if<NeuralScore>(&fld.source)) {
            double tr = n->net->divergence(t, x);
            if (n->scaled) tr /= fld.schedule.sigma(t);
            return -0.5 * beta * (d + tr);
          }
          throw ValidationError("score field without divergence");
        } else if constexpr (std::is_same_v<T, NeuralField>) {
          return fld.net->divergence(t, x, fld.cond);
        } else if constexpr (std::is_same_v<T, ReversedField>) {
          return -fld.inner->divergence(1.0 - t, x);
        } else {
          if (!fld.div) throw ValidationError("callback field without divergence");
          return fld.div(t, x);
        }
      },
      f->variant());
}

VelocityField reverse_field(const VelocityField& f) {
  if (const auto* r = std::get_if<ReversedField>(&f.variant())) return *r->inner;
  return ReversedField{std::make_shared<const VelocityField>(f)};
}

VelocityField convert_convention(const VelocityField& f, TimeConvention from, TimeConvention to) {
  return from == to ? f : reverse_field(f);
}

// ----------------------------------------------------------------- formulas

Vec interpolate(const Vec& x, const Vec& y, double t) { return (1.0 - t) * x + t * y; }

Vec plan_velocity(const DiscretePlan& plan, double t, const Vec& x) {
  require(t >= 0.0 && t < 1.0, "plan_velocity: t must lie in [0, 1)");
  require(plan.dim_x() == x.size() && plan.dim_y() == x.size(), "plan_velocity: dimension mismatch");
  Vec acc = Vec::Zero(x.size());
  double mass = 0.0;
  for (Eigen::Index k = 0; k < plan.size(); ++k) {
    const Vec e = (1.0 - t) * plan.x().col(k) + t * plan.y().col(k);
    if (e != x || plan.weights()[k] == 0.0) continue;
    acc += plan.weights()[k] * (plan.y().col(k) - x);
    mass += plan.weights()[k];
  }
  if (mass == 0.0) throw ValidationError("point not in support of μ_t");
  return acc / (mass * (1.0 - t));
}

DensityValue gaussian_latent_density(const LatentTarget& target, double t, const Vec& x) {
  const MixtureTerms m = latent_terms(target, t, x, false);
  const double l = log_sum_exp(m.logits);
  return {std::exp(l), l};
}

Vec gaussian_latent_score(const LatentTarget& target, double t, const Vec& x) {
  const MixtureTerms m = latent_terms(target, t, x, false);
  return mixture_mean(m, m.s);
}

Vec gaussian_latent_velocity(const LatentTarget& target, double t, const Vec& x) {
  const MixtureTerms m = latent_terms(target, t, x, true);
  return mixture_mean(m, m.g);
}

Vec gaussian_latent_velocity_score_form(const LatentTarget& target, double t, const Vec& x) {
  require(t > 0.0 && t < 1.0, "gaussian_latent_velocity: t must lie in (0, 1)");
  return score_to_velocity(t, x, gaussian_latent_score(target, t, x));
}

double gaussian_latent_divergence(const LatentTarget& target, double t, const Vec& x) {
  return mixture_divergence(latent_terms(target, t, x, true));
}

Vec lipman_kernel_velocity(const Vec& y, double r, double t, const Vec& x) {
  require(t * r < 1.0, "lipman_kernel_velocity: need t r < 1");
  return (y - r * x) / (1.0 - t * r);
}

GaussianMeasure lipman_kernel(const Vec& y, double r, double t) {
  require(t * r < 1.0, "lipman_kernel: need t r < 1");
  const double s = 1.0 - r * t;
  return GaussianMeasure::isotropic(t * y, s * s);
}

Vec lipman_marginal_velocity(const DiscreteMeasure& target, double r, double t, const Vec& x) {
  const MixtureTerms m = lipman_terms(target, r, t, x);
  return mixture_mean(m, m.g);
}

DensityValue lipman_marginal_density(const DiscreteMeasure& target, double r, double t, const Vec& x) {
  const double l = log_sum_exp(lipman_terms(target, r, t, x).logits);
  return {std::exp(l), l};
}

double lipman_marginal_divergence(const DiscreteMeasure& target, double r, double t, const Vec& x) {
  return mixture_divergence(lipman_terms(target, r, t, x));
}

namespace {
Eigen::FullPivLU<Mat> interpolated_map_lu(const AffineMap& map, double t) {
  const Eigen::Index d = map.dim();
  require(map.a.rows() == d && map.a.cols() == d, "map field: shape mismatch");
  const Mat mt = (1.0 - t) * Mat::Identity(d, d) + t * map.a;
  Eigen::FullPivLU<Mat> lu(mt);
  if (!lu.isInvertible() || lu.determinant() == 0.0) throw ValidationError("trajectory crossing at t=" + fmt_t(t));
  return lu;
}
}  // namespace

Vec map_velocity(const AffineMap& map, double t, const Vec& x) {
  require(x.size() == map.dim(), "map_velocity: dimension mismatch");
  const auto lu = interpolated_map_lu(map, t);
  const Vec z = lu.solve(x - t * map.b);
  return map(z) - z;
}

double map_divergence(const AffineMap& map, double t) {
  const Eigen::Index d = map.dim();
  const auto lu = interpolated_map_lu(map, t);
  return ((map.a - Mat::Identity(d, d)) * lu.inverse()).trace();
}

Vec prob_flow_velocity(const ScoreSource& src, const VpSchedule& s, double t, const Vec& x) {
  require(t > 0.0 && t <= s.horizon, "prob_flow_velocity: t must lie in (0, T]");
  return -0.5 * s.beta(t) * (x + score_at(src, s, t, x));
}

McEstimate mc_conditional_velocity(const CouplingSampler& sampler, double t, const Vec& x, double h, Eigen::Index n,
                                   Seed seed) {
  require(t > 0.0 && t < 1.0, "mc_conditional_velocity: t must lie in (0, 1)");
  require(h > 0.0, "mc_conditional_velocity: bandwidth must be positive");
  require(n >= 1000, "mc_conditional_velocity: need at least 1000 samples");
  Rng rng(seed, "mc_conditional_velocity");
  const Eigen::Index d = x.size();
  constexpr Eigen::Index kChunk = 1 << 16;
  // Two passes would need the draws twice; accumulate weighted first and
  // second moments instead.
  double sw = 0.0, sw2 = 0.0;
  Vec s1 = Vec::Zero(d), s2 = Vec::Zero(d), s12 = Vec::Zero(d);
  for (Eigen::Index done = 0; done < n; done += kChunk) {
    const Eigen::Index m = std::min(kChunk, n - done);
    auto [x0, x1] = sampler(m, rng);
    require(x0.rows() == d && x1.rows() == d && x0.cols() == m && x1.cols() == m,
            "mc_conditional_velocity: sampler returned wrong shape");
    for (Eigen::Index j = 0; j < m; ++j) {
      const Vec xt = (1.0 - t) * x0.col(j) + t * x1.col(j);
      const double w = std::exp(-(xt - x).squaredNorm() / (2.0 * h * h));
      if (w == 0.0) continue;
      const Vec dv = x1.col(j) - x0.col(j);
      sw += w;
      sw2 += w * w;
      s1 += w * dv;
      s2 += w * w * dv;
      s12 += w * w * dv.cwiseProduct(dv);
    }
  }
  if (!(sw > 0.0)) throw ValidationError("empty window");
  McEstimate out;
  out.value = s1 / sw;
  // sum w^2 (D - mean)^2 / (sum w)^2
  const Vec var = (s12 - 2.0 * out.value.cwiseProduct(s2) + sw2 * out.value.cwiseProduct(out.value)) / (sw * sw);
  out.stderr_ = var.cwiseMax(0.0).cwiseSqrt();
  out.effective_samples = sw * sw / sw2;
  return out;
}

Vec score_to_velocity(double t, const Vec& x, const Vec& score) {
  require(t > 0.0 && t < 1.0, "score_to_velocity: t must lie in (0, 1)");
  return ((1.0 - t) / t) * score + x / t;
}

Vec velocity_to_score(double t, const Vec& x, const Vec& v) {
  require(t > 0.0 && t < 1.0, "velocity_to_score: t must lie in (0, 1)");
  return (t * v - x) / (1.0 - t);
}

double continuity_residual(const VelocityField& field, const DensityFn& density, double t, const Vec& x, double h) {
  require(h > 0.0, "continuity_residual: step must be positive");
  double res = (density(t + h, x) - density(t - h, x)) / (2.0 * h);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = density(t, xp) * field.eval(t, xp)[i];
    const double fm = density(t, xm) * field.eval(t, xm)[i];
    res += (fp - fm) / (2.0 * h);
  }
  return res;
}

}  // namespace flowlab
