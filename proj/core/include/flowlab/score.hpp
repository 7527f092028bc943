#pragma once

#include <functional>
#include <memory>
#include <variant>

#include "flowlab/measures.hpp"
#include "flowlab/nn.hpp"

namespace flowlab {

/// Variance-preserving schedule with linear beta(t) = beta_min + (t / T)(beta_max - beta_min).
struct VpSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double horizon = 1.0;

  VpSchedule() = default;
  VpSchedule(double bmin, double bmax, double T = 1.0);

  double beta(double t) const;
  /// h(t) = int_0^t beta(s) ds.
  double h(double t) const;
  /// Mean scale b_t = exp(-h(t) / 2).
  double b(double t) const;
  /// Marginal standard deviation of the noise part, sqrt(1 - b_t^2).
  double sigma(double t) const;
};

/// Exact score of the VP marginal of a GMM data law: again a GMM with means
/// b_t m_k and covariances b_t^2 S_k + (1 - b_t^2) I.
struct AnalyticGmmScore {
  GmmMeasure prior;
};

/// Network output n(t, x); the score is n / sigma_t when `scaled` (noise
/// parametrisation), else n itself.
struct NeuralScore {
  std::shared_ptr<const Mlp> net;
  bool scaled = true;
};

struct CallbackScore {
  std::function<Vec(double, const Vec&)> fn;
};

using ScoreSource = std::variant<AnalyticGmmScore, NeuralScore, CallbackScore>;

GmmMeasure vp_marginal(const GmmMeasure& prior, const VpSchedule& s, double t);

Vec score_at(const ScoreSource& src, const VpSchedule& s, double t, const Vec& x);
/// Column-wise scores at a common time.
Points score_batch(const ScoreSource& src, const VpSchedule& s, double t, const Points& x);

}  // namespace flowlab
