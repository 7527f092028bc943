#include <gtest/gtest.h>

#include <sstream>

#include "../oracles.hpp"
#include "flowlab/error.hpp"
#include "flowlab/training.hpp"

using namespace flowlab;

namespace {

MlpArch tiny_arch(int dim, int cond) {
  MlpArch a;
  a.dim = dim;
  a.cond_dim = cond;
  a.hidden = {6, 6};
  a.time_pairs = 1;
  return a;
}

std::vector<int> widths(const MlpArch& a) {
  std::vector<int> w{a.input_dim()};
  for (int h : a.hidden) w.push_back(h);
  w.push_back(a.dim);
  return w;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.samples = 256;
  c.batch = 32;
  c.ot_batch = 64;
  c.epochs = 2;
  c.hidden = {16, 16};
  c.time_pairs = 2;
  c.seed = 11;
  return c;
}

}  // namespace

TEST(Losses, ProductLossValueAndGradient) {
  const MlpArch a = tiny_arch(2, 0);
  Rng r(Seed{1}, "x");
  const Mlp net = Mlp::init(a, r, false);
  const Points x0 = r.normal_matrix(2, 5), x1 = r.normal_matrix(2, 5);
  const Vec t = r.uniform_vector(5, 0.0, 1.0);
  auto loss_at = [&](const Vec& th) {
    double s = 0.0;
    for (int j = 0; j < 5; ++j) {
      const Vec xt = (1 - t[j]) * x0.col(j) + t[j] * x1.col(j);
      s += (oracle::mlp_forward(widths(a), false, 1, th, t[j], xt, Vec()) - (x1.col(j) - x0.col(j))).squaredNorm();
    }
    return s / 5.0;
  };
  const LossGrad lg = fm_loss_product(net, x0, x1, t);
  EXPECT_NEAR(lg.loss, loss_at(net.params()), 1e-12);
  EXPECT_LT((lg.grad - oracle::fd_gradient(loss_at, net.params(), 1e-6)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Losses, LipmanLossValueAndGradient) {
  const MlpArch a = tiny_arch(1, 0);
  Rng r(Seed{2}, "x");
  const Mlp net = Mlp::init(a, r, false);
  const Points y = r.normal_matrix(1, 4), z = r.normal_matrix(1, 4);
  const Vec t = r.uniform_vector(4, 0.0, 1.0);
  const double rr = 0.8;
  auto loss_at = [&](const Vec& th) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) {
      // conditional flow of N(t y, (1 - r t)^2) driven from z
      const Vec xt = (1 - rr * t[j]) * z.col(j) + t[j] * y.col(j);
      const Vec target = y.col(j) - rr * z.col(j);
      s += (oracle::mlp_forward(widths(a), false, 1, th, t[j], xt, Vec()) - target).squaredNorm();
    }
    return s / 4.0;
  };
  const LossGrad lg = fm_loss_lipman(net, rr, y, z, t);
  EXPECT_NEAR(lg.loss, loss_at(net.params()), 1e-12);
  EXPECT_LT((lg.grad - oracle::fd_gradient(loss_at, net.params(), 1e-6)).cwiseAbs().maxCoeff(), 1e-8);
  // r -> 1 recovers the product loss
  EXPECT_NEAR(fm_loss_lipman(net, 1.0 - 1e-13, y, z, t).loss, fm_loss_product(net, z, y, t).loss, 1e-9);
}

TEST(Losses, BayesLossUsesInterpolatedCondition) {
  const MlpArch a = tiny_arch(2, 1);
  Rng r(Seed{3}, "x");
  const Mlp net = Mlp::init(a, r, false);
  const Points w0 = r.normal_matrix(1, 3), w1 = r.normal_matrix(1, 3), x0 = r.normal_matrix(2, 3),
               x1 = r.normal_matrix(2, 3);
  const Vec t = r.uniform_vector(3, 0.0, 1.0);
  auto loss_at = [&](const Vec& th) {
    double s = 0.0;
    for (int j = 0; j < 3; ++j) {
      const Vec xt = (1 - t[j]) * x0.col(j) + t[j] * x1.col(j);
      const Vec wt = (1 - t[j]) * w0.col(j) + t[j] * w1.col(j);
      s += (oracle::mlp_forward(widths(a), false, 1, th, t[j], xt, wt) - (x1.col(j) - x0.col(j))).squaredNorm();
    }
    return s / 3.0;
  };
  const LossGrad lg = cfm_loss_bayes(net, w0, x0, w1, x1, t);
  EXPECT_NEAR(lg.loss, loss_at(net.params()), 1e-12);
  EXPECT_LT((lg.grad - oracle::fd_gradient(loss_at, net.params(), 1e-6)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Losses, ExactFieldAttainsTheMarginalLossFloor) {
  // the loss of the exact marginal field is below the loss of any perturbation of it
  Points atoms(1, 2);
  atoms << -1.0, 2.0;
  const DiscreteMeasure m = DiscreteMeasure::uniform(atoms);
  const VelocityField exact(GaussianLatentField{m});
  const VelocityField shifted = CallbackField{[&](double t, const Vec& x) -> Vec { return exact.eval(t, x) + Vec::Constant(1, 0.1); }, {}};
  Rng r(Seed{4}, "x");
  const Eigen::Index n = 100000;
  const Points x0 = r.normal_matrix(1, n);
  Points x1(1, n);
  for (Eigen::Index j = 0; j < n; ++j) x1(0, j) = atoms(0, static_cast<Eigen::Index>(r.index(2)));
  const Vec t = r.uniform_vector(n, 0.0, 0.95);
  const double a = fm_loss_field(exact, x0, x1, t), b = fm_loss_field(shifted, x0, x1, t);
  // FM(v + c) - FM(v) = c^2 + 2 c mean(v - u), and mean(v - u) has expectation 0
  Vec resid(n);
  for (Eigen::Index j = 0; j < n; ++j)
    resid[j] = exact.eval(t[j], (1 - t[j]) * x0.col(j) + t[j] * x1.col(j))[0] - (x1(0, j) - x0(0, j));
  const double se = 0.2 * std::sqrt((resid.array() - resid.mean()).square().mean() / static_cast<double>(n));
  EXPECT_NEAR(b - a, 0.01, 4.0 * se);
}

TEST(Config, ValidationRejectsInconsistentSettings) {
  TrainConfig c = tiny_config();
  c.coupling = Coupling::bayes_product;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.target = "bayes5d";
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.coupling = Coupling::minibatch_ot;
  c.ot_batch = 48;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config();
  c.target = "nope";
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(parse_coupling("ot"), ValidationError);
  EXPECT_EQ(parse_coupling(to_string(Coupling::bayes_wbeta)), Coupling::bayes_wbeta);
}

TEST(Train, RerunsAreBitIdentical) {
  for (Coupling cp : {Coupling::independent, Coupling::minibatch_ot, Coupling::lipman}) {
    TrainConfig c = tiny_config();
    c.coupling = cp;
    const TrainResult a = train(c), b = train(c);
    EXPECT_EQ(a.net.params(), b.net.params());
    EXPECT_EQ(a.report.loss, b.report.loss);
    EXPECT_EQ(a.report.steps, 2 * 256 / 32);
  }
}

TEST(Train, SeedChangesTheRun) {
  TrainConfig c = tiny_config();
  const TrainResult a = train(c);
  c.seed += 1;
  EXPECT_NE(a.net.params(), train(c).net.params());
}

TEST(Train, LossDecreasesOnTheGaussianMixture) {
  TrainConfig c = tiny_config();
  c.samples = 2048;
  c.batch = 64;
  c.epochs = 3;
  const TrainResult r = train(c);
  c.epochs = 0;
  const TrainResult init = train(c);
  Rng rng(Seed{5}, "check");
  const Points x0 = rng.normal_matrix(2, 1024);
  const Points x1 = sample(Measure(gmm8()), 1024, rng);
  const Vec t = rng.uniform_vector(1024, 0.0, 1.0);
  EXPECT_LT(fm_loss_product(r.net, x0, x1, t).loss, 0.8 * fm_loss_product(init.net, x0, x1, t).loss);
}

TEST(Train, ConditionalCouplingsRun) {
  for (Coupling cp : {Coupling::bayes_product, Coupling::bayes_wbeta}) {
    TrainConfig c = tiny_config();
    c.target = "labels2";
    c.coupling = cp;
    const TrainResult r = train(c);
    EXPECT_EQ(r.net.cond_dim(), 1);
    EXPECT_EQ(r.net.dim(), 1);
    EXPECT_EQ(r.net.arch().role, NetRole::conditional_velocity);
    EXPECT_TRUE(std::isfinite(r.report.running_mean.back()));
  }
}

TEST(LossCsv, HeaderAndRows) {
  LossReport r;
  r.push(2.0);
  r.push(4.0);
  std::ostringstream s;
  write_loss_csv(s, r);
  EXPECT_EQ(s.str(), "step,loss,running_mean\n1,2,2\n2,4,3\n");
}
