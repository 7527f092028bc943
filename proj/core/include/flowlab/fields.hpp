#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <variant>

#include "flowlab/measures.hpp"
#include "flowlab/nn.hpp"
#include "flowlab/score.hpp"
#include "flowlab/transport.hpp"

namespace flowlab {

class VelocityField;

using LatentTarget = std::variant<DiscreteMeasure, GmmMeasure>;

/// Velocity induced by a discrete plan; only defined on the support of e_t # plan.
struct PlanField {
  DiscretePlan plan;
};

/// Curve (1 - t) Z + t Y with Z ~ N(0, I) independent of Y ~ target.
/// Discrete targets are treated as mixtures of zero-covariance components.
struct GaussianLatentField {
  LatentTarget target;
};

/// Kernel path N(t y, (1 - r t)^2 I) mixed over y ~ target.
struct LipmanField {
  double r = 0.5;
  DiscreteMeasure target;
};

/// Straight-line interpolation of a map T: T_t = (1 - t) Id + t T.
struct MapField {
  AffineMap map;
};

/// Probability-flow velocity of a VP diffusion (diffusion time, t in (0, T]).
struct ScoreField {
  VpSchedule schedule;
  ScoreSource source;
};

struct NeuralField {
  std::shared_ptr<const Mlp> net;
  /// Fixed condition fed to a conditional network (empty otherwise).
  Vec cond;
};

/// (t, x) -> -inner(1 - t, x).
struct ReversedField {
  std::shared_ptr<const VelocityField> inner;
};

struct CallbackField {
  std::function<Vec(double, const Vec&)> fn;
  std::function<double(double, const Vec&)> div;
};

class VelocityField {
 public:
  using Variant = std::variant<PlanField, GaussianLatentField, LipmanField, MapField, ScoreField, NeuralField,
                               ReversedField, CallbackField>;

  template <class T>
    requires std::is_constructible_v<Variant, T&&> && (!std::is_same_v<std::decay_t<T>, VelocityField>)
  VelocityField(T&& f) : v_(std::forward<T>(f)) {}

  Vec eval(double t, const Vec& x) const;
  /// Column-wise evaluation at a common time (batched for neural fields).
  Points eval_batch(double t, const Points& x) const;
  /// Spatial divergence; throws for fields without one.
  double divergence(double t, const Vec& x) const;
  bool has_divergence() const;

  const Variant& variant() const { return v_; }

 private:
  Variant v_;
};

enum class TimeConvention { fm, cnf };

VelocityField reverse_field(const VelocityField& f);
/// Re-express a field given in convention `from` in convention `to`.
VelocityField convert_convention(const VelocityField& f, TimeConvention from, TimeConvention to);

Vec interpolate(const Vec& x, const Vec& y, double t);

/// v_t(x) = sum_y alpha_t^x(y) (y - x) / (1 - t) over plan atoms whose image under e_t is exactly x.
Vec plan_velocity(const DiscretePlan& plan, double t, const Vec& x);

struct DensityValue {
  double density = 0.0;
  double log_density = 0.0;
};

DensityValue gaussian_latent_density(const LatentTarget& target, double t, const Vec& x);
Vec gaussian_latent_score(const LatentTarget& target, double t, const Vec& x);
/// Mixture form sum_k r_k(x) E[Y - Z | X_t = x, k].
Vec gaussian_latent_velocity(const LatentTarget& target, double t, const Vec& x);
/// Score form (1 - t) / t grad log p_t(x) + x / t.
Vec gaussian_latent_velocity_score_form(const LatentTarget& target, double t, const Vec& x);
double gaussian_latent_divergence(const LatentTarget& target, double t, const Vec& x);

Vec lipman_kernel_velocity(const Vec& y, double r, double t, const Vec& x);
/// K_t(y, .) = N(t y, (1 - r t)^2 I).
GaussianMeasure lipman_kernel(const Vec& y, double r, double t);
Vec lipman_marginal_velocity(const DiscreteMeasure& target, double r, double t, const Vec& x);
DensityValue lipman_marginal_density(const DiscreteMeasure& target, double r, double t, const Vec& x);
double lipman_marginal_divergence(const DiscreteMeasure& target, double r, double t, const Vec& x);

Vec map_velocity(const AffineMap& map, double t, const Vec& x);
double map_divergence(const AffineMap& map, double t);

/// Probability-flow velocity f(t, x) - g(t)^2 / 2 * score = -beta(t)/2 (x + score).
Vec prob_flow_velocity(const ScoreSource& src, const VpSchedule& s, double t, const Vec& x);

using CouplingSampler = std::function<std::pair<Points, Points>(Eigen::Index, Rng&)>;

struct McEstimate {
  Vec value;
  /// Per-coordinate standard error of the weighted mean.
  Vec stderr_;
  double effective_samples = 0.0;
};

/// Nadaraya-Watson estimate of E[X1 - X0 | X_t = x] with a Gaussian window of width h.
McEstimate mc_conditional_velocity(const CouplingSampler& sampler, double t, const Vec& x, double h, Eigen::Index n,
                                   Seed seed);

Vec score_to_velocity(double t, const Vec& x, const Vec& score);
Vec velocity_to_score(double t, const Vec& x, const Vec& v);

using DensityFn = std::function<double(double, const Vec&)>;

/// Central-difference residual of d_t p + div(p v) at (t, x) with step h.
double continuity_residual(const VelocityField& field, const DensityFn& density, double t, const Vec& x, double h);

}  // namespace flowlab
