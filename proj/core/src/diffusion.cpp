#include "flowlab/diffusion.hpp"

#include <chrono>
#include <cmath>

#include "flowlab/error.hpp"

namespace flowlab {

Points forward_sample(const VpSchedule& s, const Points& x0, double t, Rng& rng) {
  require(t >= 0.0 && t <= s.horizon, "forward_sample: t must lie in [0, T]");
  if (t == 0.0) return x0;
  return s.b(t) * x0 + s.sigma(t) * rng.normal_matrix(x0.rows(), x0.cols());
}

Points forward_sample(const VpSchedule& s, const Points& x0, double t, Seed seed) {
  Rng rng(seed, "forward_sample");
  return forward_sample(s, x0, t, rng);
}

Vec conditional_score(const VpSchedule& s, const Vec& x, const Vec& x0, double t) {
  if (!(t > 0.0)) throw ValidationError("degenerate conditional");
  const double b = s.b(t);
  return -(x - b * x0) / (-std::expm1(-s.h(t)));
}

LossGrad dsm_loss(const Mlp& net, const VpSchedule& s, const Points& x0, const Vec& t, Seed seed, bool scaled) {
  require(x0.cols() == t.size() && x0.cols() >= 1, "dsm_loss: batch sizes differ");
  Rng rng(seed, "dsm");
  const Eigen::Index n = x0.cols();
  Points x(x0.rows(), n), target(x0.rows(), n);
  Vec inv_sigma(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(t[j] > 0.0)) throw ValidationError("degenerate conditional");
    const double sig = s.sigma(t[j]);
    const Vec z = rng.normal_vector(x0.rows());
    x.col(j) = s.b(t[j]) * x0.col(j) + sig * z;
    target.col(j) = -z / sig;
    inv_sigma[j] = scaled ? 1.0 / sig : 1.0;
  }
  MlpTape tape;
  const Mat out = net.forward_features(net.features_batch(t, x), &tape);
  const Mat score = out * inv_sigma.asDiagonal();
  const Mat resid = score - target;
  LossGrad lg;
  lg.loss = resid.squaredNorm() / static_cast<double>(n);
  if (!std::isfinite(lg.loss)) throw NumericalError("diverged");
  lg.grad = net.backward(tape, (2.0 / static_cast<double>(n)) * resid * inv_sigma.asDiagonal());
  return lg;
}

double dsm_loss_value(const ScoreSource& src, const VpSchedule& s, const Points& x0, const Vec& t, const Points& z) {
  require(x0.cols() == t.size() && z.cols() == x0.cols() && z.rows() == x0.rows(), "dsm_loss_value: shape mismatch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const double sig = s.sigma(t[j]);
    const Vec x = s.b(t[j]) * x0.col(j) + sig * z.col(j);
    total += (score_at(src, s, t[j], x) + z.col(j) / sig).squaredNorm();
  }
  return total / static_cast<double>(x0.cols());
}

Points reverse_sde_sample(const ScoreSource& src, const VpSchedule& s, Eigen::Index dim, Eigen::Index n, int steps,
                          Seed seed, double t_min) {
  require(steps >= 1, "reverse_sde_sample: steps must be >= 1");
  require(t_min > 0.0 && t_min < s.horizon, "reverse_sde_sample: t_min must lie in (0, T)");
  Rng rng(seed, "reverse_sde");
  Points y = rng.normal_matrix(dim, n);
  const double dt = (s.horizon - t_min) / steps;
  for (int k = 0; k < steps; ++k) {
    const double tau = s.horizon - k * dt;
    const double beta = s.beta(tau);
    const Points sc = score_batch(src, s, tau, y);
    y += dt * (0.5 * beta * y + beta * sc) + std::sqrt(beta * dt) * rng.normal_matrix(dim, n);
    if (!y.allFinite()) throw NumericalError("blow-up at t=" + std::to_string(tau - dt));
  }
  return y;
}

Points prob_flow_sample(const ScoreSource& src, const VpSchedule& s, Eigen::Index dim, Eigen::Index n,
                        const SolverSpec& spec, Seed seed, double t_min) {
  require(t_min > 0.0 && t_min < s.horizon, "prob_flow_sample: t_min must lie in (0, T)");
  Rng rng(seed, "prob_flow");
  const Points z = rng.normal_matrix(dim, n);
  return integrate_batch(VelocityField(ScoreField{s, src}), z, s.horizon, t_min, spec);
}

GmmMeasure diffusion_toy_prior() {
  return GmmMeasure(Vec::Constant(2, 0.5), {GaussianMeasure::isotropic(Vec::Constant(1, -2.0), 0.25),
                                           GaussianMeasure::isotropic(Vec::Constant(1, 2.0), 0.25)});
}

TrainResult train_score(const DiffusionConfig& c) {
  require(c.steps >= 0 && c.batch >= 1, "train_score: counts must be positive");
  require(c.t_min > 0.0 && c.t_min < c.schedule.horizon, "train_score: t_min must lie in (0, T)");
  const auto start = std::chrono::steady_clock::now();
  MlpArch arch;
  arch.dim = static_cast<int>(c.prior.dim());
  arch.hidden = c.hidden;
  arch.time_pairs = c.time_pairs;
  arch.activation = c.activation;
  arch.role = NetRole::score;
  Rng init(Seed{c.seed}, "init");
  TrainResult res{Mlp::init(arch, init), {}};
  AdamState adam(c.adam, static_cast<Eigen::Index>(res.net.param_count()));
  Rng data(Seed{c.seed}, "data");
  Rng time(Seed{c.seed}, "time");
  Rng noise(Seed{c.seed}, "noise");
  const Measure prior = c.prior;
  for (int k = 0; k < c.steps; ++k) {
    const Points x0 = sample(prior, c.batch, data);
    Vec t(c.batch);
    for (int i = 0; i < c.batch; ++i) t[i] = c.t_min + (c.schedule.horizon - c.t_min) * time.uniform();
    const LossGrad lg = dsm_loss(res.net, c.schedule, x0, t, Seed{noise.next_u64()}, c.scaled);
    adam_step(adam, res.net.params(), lg.grad);
    res.report.push(lg.loss);
  }
  res.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

ScoreDeviation score_grid_deviation(const ScoreSource& learned, const GmmMeasure& prior, const VpSchedule& s,
                                    const Vec& t_grid, const Vec& x_grid, double rel_density) {
  require(prior.dim() == 1, "score_grid_deviation: 1-D priors only");
  ScoreDeviation dev;
  for (Eigen::Index i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    const GmmMeasure marg = vp_marginal(prior, s, t);
    Vec logp(x_grid.size());
    for (Eigen::Index j = 0; j < x_grid.size(); ++j) logp[j] = marg.log_density(Vec::Constant(1, x_grid[j]));
    const double cut = logp.maxCoeff() + std::log(rel_density);
    for (Eigen::Index j = 0; j < x_grid.size(); ++j) {
      if (logp[j] < cut) continue;
      const Vec x = Vec::Constant(1, x_grid[j]);
      const double e = (score_at(learned, s, t, x) - marg.score(x)).cwiseAbs().maxCoeff();
      dev.max_abs = std::max(dev.max_abs, e);
      dev.points += 1;
    }
  }
  return dev;
}

}  // namespace flowlab
