#include <gtest/gtest.h>

#include "../oracles.hpp"
#include "flowlab/error.hpp"
#include "flowlab/fields.hpp"

using namespace flowlab;

namespace {

GmmMeasure gmm_1d() {
  return GmmMeasure(Vec::Constant(2, 0.5), {GaussianMeasure::isotropic(Vec::Constant(1, -1.5), 0.3),
                                            GaussianMeasure::isotropic(Vec::Constant(1, 2.0), 0.6)});
}

GmmMeasure gmm_2d() {
  Mat c(2, 2);
  c << 0.5, 0.2, 0.2, 0.3;
  Vec m1(2), m2(2);
  m1 << 1.0, -1.0;
  m2 << -2.0, 0.5;
  Vec w(2);
  w << 0.3, 0.7;
  return GmmMeasure(w, {GaussianMeasure(m1, c), GaussianMeasure::isotropic(m2, 0.4)});
}

DiscreteMeasure atoms_1d() {
  Points p(1, 3);
  p << -2.0, 0.5, 3.0;
  Vec w(3);
  w << 0.2, 0.5, 0.3;
  return DiscreteMeasure(p, w);
}

Vec v1(double a) { return Vec::Constant(1, a); }

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);
double phi(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

}  // namespace

TEST(GaussianLatent, DensityIsMixtureOfScaledComponents) {
  const GmmMeasure g = gmm_2d();
  Rng r(Seed{1}, "x");
  for (double t : {0.0, 0.3, 0.8, 1.0}) {
    const Vec x = r.normal_vector(2);
    double p = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const auto& c = g.components()[k];
      const Mat s = (1 - t) * (1 - t) * Mat::Identity(2, 2) + t * t * c.cov();
      p += g.weights()[static_cast<Eigen::Index>(k)] * std::exp(oracle::normal_logpdf(x, t * c.mean(), s));
    }
    EXPECT_NEAR(gaussian_latent_density(g, t, x).density, p, 1e-12);
    EXPECT_NEAR(gaussian_latent_density(g, t, x).log_density, std::log(p), 1e-10);
  }
}

TEST(GaussianLatent, DensityIntegratesToOne) {
  for (double t : {0.2, 0.7}) {
    const double a = oracle::simpson([&](double x) { return gaussian_latent_density(gmm_1d(), t, v1(x)).density; },
                                     -15, 15, 4000);
    const double b = oracle::simpson([&](double x) { return gaussian_latent_density(atoms_1d(), t, v1(x)).density; },
                                     -15, 15, 4000);
    EXPECT_NEAR(a, 1.0, 1e-9);
    EXPECT_NEAR(b, 1.0, 1e-9);
  }
}

TEST(GaussianLatent, VelocityIsConditionalExpectationForAtoms) {
  const DiscreteMeasure m = atoms_1d();
  for (double t : {0.1, 0.5, 0.9}) {
    for (double x : {-3.0, 0.0, 1.2, 4.0}) {
      double num = 0.0, den = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double y = m.point(k)[0];
        const double z = (x - t * y) / (1 - t);
        const double w = m.weight(k) * phi(z);
        num += w * (y - z);
        den += w;
      }
      EXPECT_NEAR(gaussian_latent_velocity(m, t, v1(x))[0], num / den, 1e-12);
    }
  }
}

TEST(GaussianLatent, VelocityIsConditionalExpectationForGmmByQuadrature) {
  const GmmMeasure g = gmm_1d();
  for (double t : {0.2, 0.6}) {
    for (double x : {-2.0, 0.3, 2.5}) {
      auto weight = [&](double y) { return std::exp(g.log_density(v1(y))) * phi((x - t * y) / (1 - t)); };
      const double num = oracle::simpson([&](double y) { return weight(y) * (y - (x - t * y) / (1 - t)); }, -12, 12, 6000);
      const double den = oracle::simpson(weight, -12, 12, 6000);
      EXPECT_NEAR(gaussian_latent_velocity(g, t, v1(x))[0], num / den, 1e-8);
    }
  }
}

TEST(GaussianLatent, MixtureAndScoreFormsAgree) {
  Rng r(Seed{2}, "x");
  for (double t : {0.1, 0.4, 0.9}) {
    const Vec x = r.normal_vector(2);
    EXPECT_LT((gaussian_latent_velocity(gmm_2d(), t, x) - gaussian_latent_velocity_score_form(gmm_2d(), t, x)).norm(),
              1e-10);
  }
}

TEST(GaussianLatent, ScoreAndDivergenceMatchFiniteDifferences) {
  Rng r(Seed{3}, "x");
  const LatentTarget g = gmm_2d();
  for (double t : {0.2, 0.7}) {
    const Vec x = r.normal_vector(2);
    const Vec fd = oracle::fd_gradient([&](const Vec& y) { return gaussian_latent_density(g, t, y).log_density; }, x, 1e-5);
    EXPECT_LT((gaussian_latent_score(g, t, x) - fd).cwiseAbs().maxCoeff(), 1e-7);
    double div = 0.0;
    for (int i = 0; i < 2; ++i) {
      Vec p = x, q = x;
      p[i] += 1e-5;
      q[i] -= 1e-5;
      div += (gaussian_latent_velocity(g, t, p)[i] - gaussian_latent_velocity(g, t, q)[i]) / 2e-5;
    }
    EXPECT_NEAR(gaussian_latent_divergence(g, t, x), div, 1e-7);
  }
}

TEST(GaussianLatent, ContinuityEquationHolds) {
  const LatentTarget g = gmm_2d();
  const VelocityField f(GaussianLatentField{g});
  const DensityFn p = [&](double t, const Vec& x) { return gaussian_latent_density(g, t, x).density; };
  Rng r(Seed{4}, "x");
  for (double t : {0.25, 0.5, 0.75}) {
    const Vec x = r.normal_vector(2);
    EXPECT_LT(std::abs(continuity_residual(f, p, t, x, 1e-4)), 1e-7);
  }
}

TEST(GaussianLatent, PointMassTargetDegeneratesAtOne) {
  const LatentTarget d = DiscreteMeasure::dirac(Vec::Zero(1));
  EXPECT_THROW(gaussian_latent_density(d, 1.0, v1(0.0)), ValidationError);
}

TEST(Lipman, KernelVelocityTransportsKernel) {
  // mean t y and std 1 - r t: v = (y - r x) / (1 - r t) satisfies d/dt of both moments
  const double r = 0.9, t = 0.4;
  const Vec y = v1(2.0);
  const GaussianMeasure k = lipman_kernel(y, r, t);
  EXPECT_NEAR(k.mean()[0], t * 2.0, 1e-15);
  EXPECT_NEAR(k.cov()(0, 0), (1 - r * t) * (1 - r * t), 1e-15);
  const double x = 1.3;
  EXPECT_NEAR(lipman_kernel_velocity(y, r, t, v1(x))[0], (2.0 - r * x) / (1 - r * t), 1e-14);
}

TEST(Lipman, MarginalFieldSatisfiesContinuity) {
  const DiscreteMeasure m = atoms_1d();
  const double r = 0.95;
  const VelocityField f(LipmanField{r, m});
  const DensityFn p = [&](double t, const Vec& x) { return lipman_marginal_density(m, r, t, x).density; };
  for (double t : {0.2, 0.6, 0.9})
    for (double x : {-1.0, 0.4, 2.2}) {
      const double coarse = continuity_residual(f, p, t, v1(x), 1e-3), fine = continuity_residual(f, p, t, v1(x), 1e-4);
      EXPECT_LT(std::abs(fine), 0.02 * std::abs(coarse) + 1e-12);
      EXPECT_LT(std::abs(continuity_residual(f, p, t, v1(x), 1e-5)), 1e-7);
    }
  const double div_fd =
      (lipman_marginal_velocity(m, r, 0.5, v1(0.3 + 1e-5))[0] - lipman_marginal_velocity(m, r, 0.5, v1(0.3 - 1e-5))[0]) /
      2e-5;
  EXPECT_NEAR(lipman_marginal_divergence(m, r, 0.5, v1(0.3)), div_fd, 1e-7);
}

TEST(MapField, TrajectoriesFollowTheInterpolatedMap) {
  Mat a(2, 2);
  a << 2.0, 0.3, 0.3, 1.0;
  Vec b(2);
  b << 1.0, -1.0;
  const AffineMap map{a, b};
  const Vec x0 = Vec::Constant(2, 0.7);
  for (double t : {0.0, 0.3, 0.9}) {
    const Vec xt = (1 - t) * x0 + t * map(x0);
    EXPECT_LT((map_velocity(map, t, xt) - (map(x0) - x0)).norm(), 1e-12);
    double div = 0.0;
    for (int i = 0; i < 2; ++i) {
      Vec p = xt, q = xt;
      p[i] += 1e-6;
      q[i] -= 1e-6;
      div += (map_velocity(map, t, p)[i] - map_velocity(map, t, q)[i]) / 2e-6;
    }
    EXPECT_NEAR(map_divergence(map, t), div, 1e-7);
  }
}

TEST(MapField, CrossingTrajectoriesAreRejected) {
  const AffineMap flip{-Mat::Identity(1, 1), Vec::Zero(1)};
  EXPECT_THROW(map_velocity(flip, 0.5, v1(0.0)), ValidationError);
}

TEST(PlanField, VelocityOnSupportAndOffSupport) {
  Points x(1, 2), y(1, 2);
  x << 0.0, 1.0;
  y << 2.0, 4.0;
  const DiscretePlan plan(x, y, Vec::Constant(2, 0.5));
  EXPECT_NEAR(plan_velocity(plan, 0.25, v1(0.5))[0], 2.0, 1e-15);
  EXPECT_NEAR(plan_velocity(plan, 0.25, v1(1.75))[0], 3.0, 1e-15);
  EXPECT_THROW(plan_velocity(plan, 0.25, v1(0.4)), ValidationError);
  // both atoms pass through 0.5 at t = 0.25: velocities 2 and -2 average out
  y << 2.0, -1.0;
  EXPECT_NEAR(plan_velocity(DiscretePlan(x, y, Vec::Constant(2, 0.5)), 0.25, v1(0.5))[0], 0.0, 1e-15);
}

TEST(Reversal, DoubleReversalIsIdentity) {
  const VelocityField f(GaussianLatentField{LatentTarget(gmm_2d())});
  const VelocityField r = reverse_field(f);
  const VelocityField rr = reverse_field(r);
  Rng g(Seed{5}, "x");
  const Vec x = g.normal_vector(2);
  EXPECT_EQ(rr.eval(0.3, x), f.eval(0.3, x));
  EXPECT_LT((r.eval(0.3, x) + f.eval(0.7, x)).norm(), 1e-15);
  EXPECT_NEAR(r.divergence(0.3, x), -f.divergence(0.7, x), 1e-14);
  const VelocityField back = convert_convention(convert_convention(f, TimeConvention::fm, TimeConvention::cnf),
                                                TimeConvention::cnf, TimeConvention::fm);
  EXPECT_EQ(back.eval(0.6, x), f.eval(0.6, x));
}

TEST(ScoreVelocity, ConversionsInvertEachOther) {
  Rng g(Seed{6}, "x");
  const Vec x = g.normal_vector(3), s = g.normal_vector(3);
  EXPECT_LT((velocity_to_score(0.4, x, score_to_velocity(0.4, x, s)) - s).norm(), 1e-12);
  const LatentTarget t = gmm_2d();
  const Vec y = g.normal_vector(2);
  EXPECT_LT((score_to_velocity(0.6, y, gaussian_latent_score(t, 0.6, y)) - gaussian_latent_velocity(t, 0.6, y)).norm(),
            1e-10);
}

TEST(ConditionalVelocity, KernelEstimateMatchesAnalyticField) {
  const DiscreteMeasure m = atoms_1d();
  const CouplingSampler sampler = [&](Eigen::Index n, Rng& rng) {
    Points x0 = rng.normal_matrix(1, n);
    Points x1(1, n);
    for (Eigen::Index j = 0; j < n; ++j) x1(0, j) = m.point(static_cast<Eigen::Index>(rng.categorical(m.weights())))[0];
    return std::make_pair(x0, x1);
  };
  for (double x : {-0.5, 0.8}) {
    const McEstimate e = mc_conditional_velocity(sampler, 0.5, v1(x), 0.02, 400000, Seed{7});
    const double exact = gaussian_latent_velocity(m, 0.5, v1(x))[0];
    // kernel bias is O(h^2); allow it on top of 4 standard errors
    EXPECT_NEAR(e.value[0], exact, 4.0 * e.stderr_[0] + 0.01);
    EXPECT_GT(e.effective_samples, 100.0);
  }
}

TEST(ScoreField, StationaryGaussianHasZeroFlow) {
  const GmmMeasure g(Vec::Ones(1), {GaussianMeasure::standard(2)});
  const VpSchedule s;
  const Vec x = Vec::Constant(2, 0.8);
  for (double t : {0.1, 0.5, 1.0}) EXPECT_LT(prob_flow_velocity(AnalyticGmmScore{g}, s, t, x).norm(), 1e-12);
}
