#include <gtest/gtest.h>

#include "../oracles.hpp"
#include "flowlab/error.hpp"
#include "flowlab/transport.hpp"

using namespace flowlab;

namespace {

Vec probs(const Vec& v) { return v / v.sum(); }

}  // namespace

TEST(Hungarian, MatchesBruteForceOnRandomSixBySix) {
  Rng r(Seed{1}, "t");
  for (int trial = 0; trial < 30; ++trial) {
    const Mat c = r.normal_matrix(6, 6).cwiseAbs();
    const auto [best, perm] = oracle::brute_force_assignment(c);
    const std::vector<int> p = hungarian(c);
    double s = 0.0;
    for (int i = 0; i < 6; ++i) s += c(i, p[static_cast<std::size_t>(i)]);
    EXPECT_NEAR(s, best, 1e-12);
  }
}

TEST(Hungarian, TiesResolveToLowestIndex) {
  const std::vector<int> p = hungarian(Mat::Ones(5, 5));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(p[static_cast<std::size_t>(i)], i);
  Mat c = Mat::Zero(3, 3);
  const auto [best, perm] = oracle::brute_force_assignment(c);
  EXPECT_EQ(hungarian(c), perm);
}

TEST(Hungarian, RectangularOrEmpty) {
  EXPECT_TRUE(hungarian(Mat(0, 0)).empty());
  EXPECT_THROW(hungarian(Mat::Zero(2, 3)), ValidationError);
}

TEST(Assignment, PermutedCopyCostsZero) {
  Rng r(Seed{2}, "t");
  const Points x = r.normal_matrix(3, 40);
  const auto perm = r.permutation(40);
  Points y(3, 40);
  for (int i = 0; i < 40; ++i) y.col(perm[static_cast<std::size_t>(i)]) = x.col(i);
  const Assignment a = solve_assignment(x, y);
  EXPECT_EQ(a.perm, perm);
  EXPECT_EQ(a.cost, 0.0);
}

TEST(Transportation, MatchesMinCostFlowOnFiveBySeven) {
  Rng r(Seed{3}, "t");
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<long> a(5), b(7);
    long total = 0;
    for (auto& v : a) total += (v = 1 + static_cast<long>(r.index(9)));
    // demands with the same total
    long left = total;
    for (int j = 0; j < 6; ++j) {
      b[static_cast<std::size_t>(j)] = std::min<long>(left, static_cast<long>(r.index(static_cast<std::uint64_t>(total / 4 + 1))));
      left -= b[static_cast<std::size_t>(j)];
    }
    b[6] = left;
    const Mat c = r.uniform_vector(35, 0.0, 10.0).reshaped(5, 7);
    const double expect = oracle::min_cost_flow_transport(a, b, c) / static_cast<double>(total);
    Vec av(5), bv(7);
    for (int i = 0; i < 5; ++i) av[i] = static_cast<double>(a[static_cast<std::size_t>(i)]) / total;
    for (int j = 0; j < 7; ++j) bv[j] = static_cast<double>(b[static_cast<std::size_t>(j)]) / total;
    const Mat flow = solve_transportation(av, bv, c);
    EXPECT_NEAR(flow.cwiseProduct(c).sum(), expect, 1e-10);
    EXPECT_LT((flow.rowwise().sum() - av).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((flow.colwise().sum().transpose() - bv).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(flow.minCoeff(), 0.0);
  }
}

TEST(Transportation, UniformWeightsAgreeWithAssignment) {
  Rng r(Seed{4}, "t");
  const Points x = r.normal_matrix(2, 30), y = r.normal_matrix(2, 30);
  const double a = solve_assignment(x, y).cost;
  const OtResult o = solve_discrete_ot(DiscreteMeasure::uniform(x), DiscreteMeasure::uniform(y));
  EXPECT_NEAR(o.cost, a, 1e-12);
  EXPECT_NEAR(o.plan.cost(), a, 1e-12);
}

TEST(Transportation, TooLargeSupportThrows) {
  const Points x = Mat::Zero(1, kMaxExactAtoms + 1);
  const auto m = DiscreteMeasure::uniform(x);
  EXPECT_THROW(solve_discrete_ot(m, m), ValidationError);
}

TEST(W2, DiracsAndOneDimensionalSorting) {
  EXPECT_NEAR(w2(DiscreteMeasure::dirac(Vec::Constant(2, 1.0)), DiscreteMeasure::dirac(Vec::Zero(2))),
              std::sqrt(2.0), 1e-15);
  Rng r(Seed{5}, "t");
  const Vec a = r.normal_vector(50), b = r.normal_vector(50);
  const std::vector<double> av(a.data(), a.data() + 50), bv(b.data(), b.data() + 50);
  EXPECT_NEAR(w2_sorted_1d(a, b), std::sqrt(oracle::w2sq_1d(av, bv)), 1e-12);
  EXPECT_NEAR(w2_empirical(a.transpose(), b.transpose()), std::sqrt(oracle::w2sq_1d(av, bv)), 1e-12);
}

TEST(W2, TranslationShiftsCostByMeanDistance) {
  Rng r(Seed{6}, "t");
  const Points x = r.normal_matrix(2, 12);
  const Vec shift = r.normal_vector(2);
  const DiscreteMeasure mu = DiscreteMeasure::uniform(x);
  const DiscreteMeasure nu = DiscreteMeasure::uniform(x.colwise() + shift);
  EXPECT_NEAR(w2(mu, nu), shift.norm(), 1e-12);
}

TEST(GaussianMap, PushesCovarianceAndIsSymmetric) {
  Rng r(Seed{7}, "t");
  for (int d = 1; d <= 5; ++d) {
    const Mat g1 = r.normal_matrix(d, d), g2 = r.normal_matrix(d, d);
    const GaussianMeasure mu(r.normal_vector(d), g1 * g1.transpose() + 0.1 * Mat::Identity(d, d));
    const GaussianMeasure nu(r.normal_vector(d), g2 * g2.transpose() + 0.1 * Mat::Identity(d, d));
    const AffineMap t = gaussian_monge_map(mu, nu);
    EXPECT_LT((t.a * mu.cov() * t.a.transpose() - nu.cov()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((t.a - t.a.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((t(mu.mean()) - nu.mean()).norm(), 1e-12);
    // positive definite
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (t.a + t.a.transpose())).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(GaussianMap, IdentityBetweenEqualMeasures) {
  const GaussianMeasure g(Vec::Ones(3), 2.0 * Mat::Identity(3, 3));
  const AffineMap t = gaussian_monge_map(g, g);
  EXPECT_LT((t.a - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(t.b.norm(), 1e-12);
}

namespace {

std::pair<DiscreteMeasure, DiscreteMeasure> counterexample(double n) {
  Points mu(2, 2), nu(2, 2);
  mu << 0.0, 1.0, n, 0.0;
  nu << 0.0, 1.0, 0.0, n;
  return {DiscreteMeasure::uniform(mu), DiscreteMeasure::uniform(nu)};
}

}  // namespace

TEST(WBeta, CostIsPlainW2OfScaledMeasures) {
  const auto [mu, nu] = counterexample(3.0);
  for (double beta : {0.5, 1.0, 4.0, 100.0}) {
    const WBetaResult r = w_beta(mu, nu, 1, beta);
    Mat s = Mat::Identity(2, 2);
    s(0, 0) = std::sqrt(beta);
    const double scaled = w2(DiscreteMeasure(s * mu.points(), mu.weights()), DiscreteMeasure(s * nu.points(), nu.weights()));
    EXPECT_NEAR(r.cost, scaled * scaled, 1e-12);
  }
  // cross matching costs beta, fiber matching costs 9: switch at beta = 9
  EXPECT_NEAR(w_beta(mu, nu, 1, 1.0).cost, 1.0, 1e-12);
  EXPECT_NEAR(w_beta(mu, nu, 1, 1.0).w_mass, 1.0, 1e-12);
  EXPECT_NEAR(w_beta(mu, nu, 1, 20.0).cost, 9.0, 1e-12);
  EXPECT_EQ(w_beta(mu, nu, 1, 20.0).w_mass, 0.0);
}

TEST(WBeta, BetaOneIsPlainOt) {
  Rng r(Seed{8}, "t");
  const DiscreteMeasure mu = DiscreteMeasure::uniform(r.normal_matrix(3, 7));
  const DiscreteMeasure nu = DiscreteMeasure::uniform(r.normal_matrix(3, 7));
  EXPECT_NEAR(w_beta(mu, nu, 1, 1.0).cost, solve_discrete_ot(mu, nu).cost, 1e-12);
}

TEST(CondW2, Counterexample) {
  Points w(1, 2);
  w << 0.0, 1.0;
  for (double n : {2.0, 3.0, 5.0}) {
    const auto [mu, nu] = counterexample(n);
    EXPECT_NEAR(w2(mu, nu), 1.0, 1e-12);
    EXPECT_NEAR(cond_w2(mu, nu, DiscreteMeasure::uniform(w)), n, 1e-12);
  }
}

TEST(CondW2, RejectsMeasuresOutsideTheFiberClass) {
  Points a(2, 2), b(2, 2), w(1, 2);
  a << 0.0, 1.0, 0.0, 0.0;
  b << 0.0, 2.0, 0.0, 0.0;
  w << 0.0, 1.0;
  EXPECT_THROW(cond_w2(DiscreteMeasure::uniform(a), DiscreteMeasure::uniform(b), DiscreteMeasure::uniform(w)),
               ValidationError);
}

TEST(Geodesic, EndpointsAreTheMarginals) {
  Rng r(Seed{9}, "t");
  const DiscreteMeasure mu(r.normal_matrix(2, 6), probs(r.uniform_vector(6, 0.1, 1.0)));
  const DiscreteMeasure nu(r.normal_matrix(2, 8), probs(r.uniform_vector(8, 0.1, 1.0)));
  const OtResult o = solve_discrete_ot(mu, nu);
  // W2 is a square root, so a rounding-level cost shows up at ~1e-8
  EXPECT_LT(solve_discrete_ot(geodesic_point(o.plan, 0.0), mu).cost, 1e-14);
  EXPECT_LT(solve_discrete_ot(geodesic_point(o.plan, 1.0), nu).cost, 1e-14);
  EXPECT_NEAR(w2(geodesic_point(o.plan, 0.25), geodesic_point(o.plan, 0.75)), 0.5 * std::sqrt(o.cost), 1e-9);
}
