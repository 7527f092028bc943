#include <gtest/gtest.h>

#include <sstream>

#include "../oracles.hpp"
#include "flowlab/error.hpp"
#include "flowlab/nn.hpp"

using namespace flowlab;

namespace {

MlpArch small_arch(int dim, int cond, Activation act) {
  MlpArch a;
  a.dim = dim;
  a.cond_dim = cond;
  a.time_pairs = 2;
  a.hidden = {7, 5};
  a.activation = act;
  return a;
}

Mlp random_net(const MlpArch& a, std::uint64_t seed) {
  Rng r(Seed{seed}, "init");
  return Mlp::init(a, r, false);
}

std::vector<int> widths(const MlpArch& a) {
  std::vector<int> w{a.input_dim()};
  for (int h : a.hidden) w.push_back(h);
  w.push_back(a.dim);
  return w;
}

}  // namespace

class MlpActivations : public ::testing::TestWithParam<Activation> {};

TEST_P(MlpActivations, ForwardAgreesWithLoopOracle) {
  const MlpArch a = small_arch(3, 2, GetParam());
  const Mlp net = random_net(a, 1);
  Rng r(Seed{2}, "x");
  for (int k = 0; k < 5; ++k) {
    const Vec x = r.normal_vector(3), w = r.normal_vector(2);
    const double t = r.uniform();
    const Vec ref = oracle::mlp_forward(widths(a), GetParam() == Activation::tanh, a.time_pairs, net.params(), t, x, w);
    EXPECT_LT((net.forward(t, x, w) - ref).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST_P(MlpActivations, BatchForwardMatchesColumns) {
  const MlpArch a = small_arch(2, 1, GetParam());
  const Mlp net = random_net(a, 3);
  Rng r(Seed{4}, "x");
  const Points x = r.normal_matrix(2, 6), w = r.normal_matrix(1, 6);
  const Vec t = r.uniform_vector(6, 0.0, 1.0);
  const Points out = net.forward_batch(t, x, w);
  for (int j = 0; j < 6; ++j) EXPECT_LT((out.col(j) - net.forward(t[j], x.col(j), w.col(j))).norm(), 1e-14);
  const Points shared = net.forward_batch(Vec::Constant(1, 0.3), x, w);
  EXPECT_LT((shared.col(2) - net.forward(0.3, x.col(2), w.col(2))).norm(), 1e-14);
}

TEST_P(MlpActivations, ParameterVjpMatchesFiniteDifferences) {
  const MlpArch a = small_arch(2, 1, GetParam());
  const Mlp net = random_net(a, 5);
  Rng r(Seed{6}, "x");
  const Vec x = r.normal_vector(2), w = r.normal_vector(1), cot = r.normal_vector(2);
  const double t = 0.37;
  const Vec g = net.vjp_params(t, x, cot, w);
  const Vec fd = oracle::fd_gradient(
      [&](const Vec& th) { return cot.dot(Mlp(a, th).forward(t, x, w)); }, net.params(), 1e-6);
  EXPECT_LT((g - fd).cwiseAbs().maxCoeff(), 1e-8);
}

TEST_P(MlpActivations, BatchedBackwardSumsPerSampleVjps) {
  const MlpArch a = small_arch(2, 0, GetParam());
  const Mlp net = random_net(a, 7);
  Rng r(Seed{8}, "x");
  const Points x = r.normal_matrix(2, 4), cot = r.normal_matrix(2, 4);
  const Vec t = r.uniform_vector(4, 0.0, 1.0);
  MlpTape tape;
  net.forward_features(net.features_batch(t, x), &tape);
  const Vec g = net.backward(tape, cot);
  Vec expect = Vec::Zero(g.size());
  for (int j = 0; j < 4; ++j) expect += net.vjp_params(t[j], x.col(j), cot.col(j));
  EXPECT_LT((g - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_P(MlpActivations, InputDerivativesMatchFiniteDifferences) {
  const MlpArch a = small_arch(3, 0, GetParam());
  const Mlp net = random_net(a, 9);
  Rng r(Seed{10}, "x");
  const Vec x = r.normal_vector(3), u = r.normal_vector(3), cot = r.normal_vector(3);
  const double t = 0.6;
  const double h = 1e-6;
  Mat jfd(3, 3);
  for (int i = 0; i < 3; ++i) {
    Vec p = x, q = x;
    p[i] += h;
    q[i] -= h;
    jfd.col(i) = (net.forward(t, p) - net.forward(t, q)) / (2 * h);
  }
  EXPECT_LT((net.jacobian_x(t, x) - jfd).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((net.jvp_input(t, x, u) - jfd * u).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((net.vjp_input(t, x, cot) - jfd.transpose() * cot).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(net.divergence(t, x), jfd.trace(), 1e-8);
}

TEST_P(MlpActivations, ValueDivGradMatchesFiniteDifferences) {
  const MlpArch a = small_arch(2, 1, GetParam());
  const Mlp net = random_net(a, 11);
  Rng r(Seed{12}, "x");
  const Vec x = r.normal_vector(2), w = r.normal_vector(1), cot = r.normal_vector(2);
  const double t = 0.45, cdiv = -0.7;
  const Mlp::DivGrad dg = net.value_div_grad(t, x, cot, cdiv, w);
  EXPECT_LT((dg.value - net.forward(t, x, w)).norm(), 1e-14);
  EXPECT_NEAR(dg.div, net.divergence(t, x, w), 1e-13);
  auto objective = [&](const Mlp& m, const Vec& y) { return cot.dot(m.forward(t, y, w)) + cdiv * m.divergence(t, y, w); };
  const Vec gx = oracle::fd_gradient([&](const Vec& y) { return objective(net, y); }, x, 1e-6);
  EXPECT_LT((dg.grad_x - gx).cwiseAbs().maxCoeff(), 1e-7);
  const Vec gt = oracle::fd_gradient([&](const Vec& th) { return objective(Mlp(a, th), x); }, net.params(), 1e-6);
  EXPECT_LT((dg.grad_theta - gt).cwiseAbs().maxCoeff(), 1e-7);
}

INSTANTIATE_TEST_SUITE_P(Both, MlpActivations, ::testing::Values(Activation::silu, Activation::tanh));

TEST(Mlp, ParamCountAndLayout) {
  const MlpArch a = small_arch(2, 1, Activation::silu);
  // input 2 + 1 + 1 + 2 * 2 = 8
  EXPECT_EQ(a.input_dim(), 8);
  EXPECT_EQ(a.param_count(), static_cast<std::size_t>(8 * 7 + 7 + 7 * 5 + 5 + 5 * 2 + 2));
  Mlp net(a);
  net.params()[0] = 1.0;  // W0(0, 0)
  net.params()[1] = 2.0;  // W0(1, 0): column-major
  EXPECT_EQ(net.weight(0)(1, 0), 2.0);
  EXPECT_EQ(net.bias(0).size(), 7);
}

TEST(Mlp, InitBoundsAndZeroLastLayer) {
  MlpArch a;
  a.hidden = {64, 64};
  Rng r(Seed{13}, "init");
  const Mlp net = Mlp::init(a, r);
  for (int l = 0; l < a.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(a.layer_in(l));
    if (l + 1 == a.num_layers()) {
      EXPECT_EQ(net.weight(l).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_EQ(net.bias(l).cwiseAbs().maxCoeff(), 0.0);
    } else {
      EXPECT_LE(net.weight(l).cwiseAbs().maxCoeff(), bound);
      EXPECT_GT(net.weight(l).cwiseAbs().maxCoeff(), 0.9 * bound);
    }
  }
  EXPECT_EQ(net.forward(0.5, Vec::Ones(2)).norm(), 0.0);
}

TEST(Adam, MatchesTextbookUpdate) {
  AdamConfig cfg;
  cfg.lr = 0.01;
  Rng r(Seed{14}, "x");
  Vec theta = r.normal_vector(10), ref = theta;
  AdamState st(cfg, 10);
  oracle::Adam o(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, 10);
  for (int k = 0; k < 20; ++k) {
    const Vec g = r.normal_vector(10);
    adam_step(st, theta, g);
    o.update(ref, g);
  }
  EXPECT_LT((theta - ref).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Adam, NonFiniteGradientDiverges) {
  AdamState st(AdamConfig{}, 2);
  Vec theta = Vec::Zero(2), g(2);
  g << 1.0, std::nan("");
  EXPECT_THROW(adam_step(st, theta, g), NumericalError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  MlpArch a = small_arch(2, 3, Activation::tanh);
  a.role = NetRole::conditional_velocity;
  const Mlp net = random_net(a, 15);
  std::stringstream s;
  save_checkpoint(s, net);
  const std::string bytes = s.str();
  EXPECT_EQ(bytes.substr(0, 7), "FLOWNN1");
  const Mlp back = load_checkpoint(s);
  EXPECT_TRUE(back.arch() == a);
  EXPECT_EQ(back.params(), net.params());
  const Vec x = Vec::Constant(2, 0.3), w = Vec::Constant(3, -0.2);
  EXPECT_EQ(back.forward(0.1, x, w), net.forward(0.1, x, w));
}

TEST(Checkpoint, RejectsCorruptHeaders) {
  const Mlp net = random_net(small_arch(2, 0, Activation::silu), 16);
  std::stringstream s;
  save_checkpoint(s, net);
  std::string bytes = s.str();
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream a(bad_magic);
  EXPECT_THROW(load_checkpoint(a), ValidationError);
  std::stringstream b(bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_checkpoint(b), ValidationError);
  std::string bad_act = bytes;
  bad_act[7 + 4 * 3] = 9;  // activation id
  std::stringstream c(bad_act);
  EXPECT_THROW(load_checkpoint(c), ValidationError);
}
