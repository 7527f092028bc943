#include "flowlab/training.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "flowlab/error.hpp"
#include "flowlab/plan_io.hpp"
#include "flowlab/transport.hpp"

namespace flowlab {

Coupling parse_coupling(const std::string& s) {
  if (s == "independent") return Coupling::independent;
  if (s == "minibatch_ot") return Coupling::minibatch_ot;
  if (s == "lipman") return Coupling::lipman;
  if (s == "bayes_product") return Coupling::bayes_product;
  if (s == "bayes_wbeta") return Coupling::bayes_wbeta;
  throw ValidationError("unknown coupling '" + s +
                        "' (expected independent, minibatch_ot, lipman, bayes_product or bayes_wbeta)");
}

std::string to_string(Coupling c) {
  switch (c) {
    case Coupling::independent: return "independent";
    case Coupling::minibatch_ot: return "minibatch_ot";
    case Coupling::lipman: return "lipman";
    case Coupling::bayes_product: return "bayes_product";
    case Coupling::bayes_wbeta: return "bayes_wbeta";
  }
  return "independent";
}

bool TrainConfig::conditional() const { return target == "bayes5d" || target == "labels2"; }

int TrainConfig::cond_dim() const {
  if (target == "bayes5d") return 5;
  if (target == "labels2") return 1;
  return 0;
}

int TrainConfig::state_dim() const {
  if (target == "bayes5d") return 5;
  if (target == "labels2") return 1;
  return static_cast<int>(dataset_dim(target));
}

MlpArch TrainConfig::arch() const {
  MlpArch a;
  a.dim = state_dim();
  a.cond_dim = cond_dim();
  a.time_pairs = time_pairs;
  a.hidden = hidden;
  a.activation = activation;
  a.role = conditional() ? NetRole::conditional_velocity : NetRole::velocity;
  return a;
}

void TrainConfig::validate() const {
  if (!conditional()) dataset_dim(target);
  const bool bayes_mode = coupling == Coupling::bayes_product || coupling == Coupling::bayes_wbeta;
  if (conditional() && !bayes_mode)
    throw ValidationError("target '" + target + "' is conditional; use coupling bayes_product or bayes_wbeta");
  if (!conditional() && bayes_mode)
    throw ValidationError("coupling " + to_string(coupling) + " needs a conditional target (bayes5d or labels2)");
  require(batch >= 1 && ot_batch >= 1 && epochs >= 0 && samples >= 1, "train: counts must be positive");
  require(samples >= batch, "train: samples must be at least the batch size");
  if (coupling == Coupling::minibatch_ot || coupling == Coupling::bayes_wbeta) {
    require(ot_batch % batch == 0, "train: ot_batch must be a multiple of batch");
    require(samples >= ot_batch, "train: samples must be at least ot_batch");
    require(ot_batch <= kMaxExactAtoms, "train: ot_batch exceeds the exact assignment regime (512)");
  }
  require(lipman_r > 0.0 && lipman_r < 1.0, "train: lipman_r must lie in (0, 1)");
  require(beta > 0.0, "train: beta must be positive");
  require(eps >= 0.0 && eps < 0.5, "train: eps must lie in [0, 0.5)");
  require(adam.lr > 0.0, "train: learning rate must be positive");
  require(time_pairs >= 0, "train: time_pairs must be nonnegative");
  for (int h : hidden) require(h >= 1, "train: hidden widths must be positive");
}

void LossReport::push(double value) {
  loss.push_back(value);
  const std::size_t n = loss.size();
  const std::size_t w = std::min<std::size_t>(n, 100);
  double s = 0.0;
  for (std::size_t i = n - w; i < n; ++i) s += loss[i];
  running_mean.push_back(s / static_cast<double>(w));
  steps += 1;
}

void write_loss_csv(std::ostream& out, const LossReport& report) {
  out << "step,loss,running_mean\n";
  for (std::size_t i = 0; i < report.loss.size(); ++i)
    out << (i + 1) << ',' << format_double(report.loss[i]) << ',' << format_double(report.running_mean[i]) << '\n';
}

// ------------------------------------------------------------------- losses

namespace {

Points lerp_cols(const Points& a, const Points& b, const Vec& t) {
  Points out(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) out.col(j) = (1.0 - t[j]) * a.col(j) + t[j] * b.col(j);
  return out;
}

LossGrad regress(const Mlp& net, const Mat& feats, const Points& target) {
  MlpTape tape;
  const Mat out = net.forward_features(feats, &tape);
  const Mat resid = out - target;
  const auto n = static_cast<double>(target.cols());
  LossGrad lg;
  lg.loss = resid.squaredNorm() / n;
  if (!std::isfinite(lg.loss)) throw NumericalError("diverged");
  lg.grad = net.backward(tape, (2.0 / n) * resid);
  return lg;
}

void check_batch(const Points& a, const Points& b, const Vec& t) {
  require(a.cols() == b.cols() && a.cols() == t.size() && a.cols() >= 1, "loss: batch sizes differ");
  require(a.rows() == b.rows(), "loss: dimension mismatch");
}

}  // namespace

LossGrad fm_loss_product(const Mlp& net, const Points& x0, const Points& x1, const Vec& t) {
  check_batch(x0, x1, t);
  return regress(net, net.features_batch(t, lerp_cols(x0, x1, t)), x1 - x0);
}

LossGrad fm_loss_lipman(const Mlp& net, double r, const Points& y, const Points& z, const Vec& t) {
  check_batch(y, z, t);
  require(r > 0.0 && r < 1.0, "fm_loss_lipman: r must lie in (0, 1)");
  Points xt(y.rows(), y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) xt.col(j) = (1.0 - t[j] * r) * z.col(j) + t[j] * y.col(j);
  return regress(net, net.features_batch(t, xt), y - r * z);
}

LossGrad cfm_loss_bayes(const Mlp& net, const Points& w0, const Points& x0, const Points& w1, const Points& x1,
                        const Vec& t) {
  check_batch(x0, x1, t);
  check_batch(w0, w1, t);
  return regress(net, net.features_batch(t, lerp_cols(x0, x1, t), lerp_cols(w0, w1, t)), x1 - x0);
}

double fm_loss_field(const VelocityField& field, const Points& x0, const Points& x1, const Vec& t) {
  check_batch(x0, x1, t);
  double s = 0.0;
  for (Eigen::Index j = 0; j < x0.cols(); ++j) {
    const Vec xt = (1.0 - t[j]) * x0.col(j) + t[j] * x1.col(j);
    s += (field.eval(t[j], xt) - (x1.col(j) - x0.col(j))).squaredNorm();
  }
  return s / static_cast<double>(x0.cols());
}

TargetSampler conditional_sampler(const TrainConfig& config) {
  if (config.target == "bayes5d") {
    auto problem = default_inverse_problem(config.prior_seed);
    return [problem](Eigen::Index n, Rng& rng) {
      Observations o = simulate(problem, n, rng);
      Points out(o.y.rows() + o.x.rows(), n);
      out << o.y, o.x;
      return out;
    };
  }
  if (config.target == "labels2") return sample_labels2;
  throw ValidationError("target '" + config.target + "' is not conditional");
}

// -------------------------------------------------------------------- loops

namespace {

struct LoopState {
  Mlp net;
  AdamState adam;
  LossReport report;
  Rng shuffle;
  Rng noise;
  Rng time;
  double eps;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  LoopState(const TrainConfig& c)
      : shuffle(Seed{c.seed}, "shuffle"), noise(Seed{c.seed}, "noise"), time(Seed{c.seed}, "time"), eps(c.eps) {
    Rng init(Seed{c.seed}, "init");
    net = Mlp::init(c.arch(), init);
    adam = AdamState(c.adam, static_cast<Eigen::Index>(net.param_count()));
  }

  Vec draw_times(int n) {
    Vec t(n);
    for (int i = 0; i < n; ++i) t[i] = eps + (1.0 - 2.0 * eps) * time.uniform();
    return t;
  }

  void apply(const LossGrad& lg) {
    adam_step(adam, net.params(), lg.grad);
    report.push(lg.loss);
  }

  TrainResult finish() {
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(net), std::move(report)};
  }
};

Points draw_dataset(const TrainConfig& c, const TargetSampler& target, Eigen::Index rows) {
  Rng data(Seed{c.seed}, "data");
  Points x = target(c.samples, data);
  require(x.rows() == rows && x.cols() == c.samples, "train: target sampler returned wrong shape");
  return x;
}

Points gather(const Points& x, const std::vector<int>& idx, std::size_t from, std::size_t count) {
  Points out(x.rows(), static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) out.col(static_cast<Eigen::Index>(k)) = x.col(idx[from + k]);
  return out;
}

}  // namespace

TrainResult train_product(const TrainConfig& config) { return train_product(config, dataset_sampler(config.target)); }

TrainResult train_product(const TrainConfig& c, const TargetSampler& target) {
  c.validate();
  LoopState st(c);
  const int d = c.state_dim();
  const Points data = draw_dataset(c, target, d);
  const int steps = c.samples / c.batch;
  for (int e = 0; e < c.epochs; ++e) {
    const std::vector<int> perm = st.shuffle.permutation(c.samples);
    for (int s = 0; s < steps; ++s) {
      const Points x1 = gather(data, perm, static_cast<std::size_t>(s) * c.batch, static_cast<std::size_t>(c.batch));
      const Points z = st.noise.normal_matrix(d, c.batch);
      const Vec t = st.draw_times(c.batch);
      st.apply(fm_loss_product(st.net, z, x1, t));
    }
  }
  return st.finish();
}

TrainResult train_minibatch_ot(const TrainConfig& config) {
  return train_minibatch_ot(config, dataset_sampler(config.target));
}

TrainResult train_minibatch_ot(const TrainConfig& c, const TargetSampler& target) {
  c.validate();
  LoopState st(c);
  const int d = c.state_dim();
  const Points data = draw_dataset(c, target, d);
  const int blocks = c.samples / c.ot_batch;
  const int inner = c.ot_batch / c.batch;
  for (int e = 0; e < c.epochs; ++e) {
    const std::vector<int> perm = st.shuffle.permutation(c.samples);
    for (int o = 0; o < blocks; ++o) {
      const Points xb = gather(data, perm, static_cast<std::size_t>(o) * c.ot_batch, static_cast<std::size_t>(c.ot_batch));
      const Points z = st.noise.normal_matrix(d, c.ot_batch);
      const Assignment match = solve_assignment(z, xb);
      for (int s = 0; s < inner; ++s) {
        Points x0(d, c.batch), x1(d, c.batch);
        for (int i = 0; i < c.batch; ++i) {
          const int k = s * c.batch + i;
          x0.col(i) = z.col(k);
          x1.col(i) = xb.col(match.perm[static_cast<std::size_t>(k)]);
        }
        const Vec t = st.draw_times(c.batch);
        st.apply(fm_loss_product(st.net, x0, x1, t));
      }
    }
  }
  return st.finish();
}

TrainResult train_lipman(const TrainConfig& config) { return train_lipman(config, dataset_sampler(config.target)); }

TrainResult train_lipman(const TrainConfig& c, const TargetSampler& target) {
  c.validate();
  LoopState st(c);
  const int d = c.state_dim();
  const Points data = draw_dataset(c, target, d);
  const int steps = c.samples / c.batch;
  for (int e = 0; e < c.epochs; ++e) {
    const std::vector<int> perm = st.shuffle.permutation(c.samples);
    for (int s = 0; s < steps; ++s) {
      const Points y = gather(data, perm, static_cast<std::size_t>(s) * c.batch, static_cast<std::size_t>(c.batch));
      const Points z = st.noise.normal_matrix(d, c.batch);
      const Vec t = st.draw_times(c.batch);
      st.apply(fm_loss_lipman(st.net, c.lipman_r, y, z, t));
    }
  }
  return st.finish();
}

TrainResult train_bayes(const TrainConfig& config) { return train_bayes(config, conditional_sampler(config)); }

TrainResult train_bayes(const TrainConfig& c, const TargetSampler& joint) {
  c.validate();
  require(c.conditional(), "train_bayes: target is not conditional");
  LoopState st(c);
  const int m = c.cond_dim();
  const int d = c.state_dim();
  const Points data = draw_dataset(c, joint, m + d);
  if (c.coupling == Coupling::bayes_product) {
    const int steps = c.samples / c.batch;
    for (int e = 0; e < c.epochs; ++e) {
      const std::vector<int> perm = st.shuffle.permutation(c.samples);
      for (int s = 0; s < steps; ++s) {
        const Points b = gather(data, perm, static_cast<std::size_t>(s) * c.batch, static_cast<std::size_t>(c.batch));
        const Points w = b.topRows(m);
        const Points z = st.noise.normal_matrix(d, c.batch);
        const Vec t = st.draw_times(c.batch);
        st.apply(cfm_loss_bayes(st.net, w, z, w, b.bottomRows(d), t));
      }
    }
    return st.finish();
  }
  require(c.coupling == Coupling::bayes_wbeta, "train_bayes: coupling must be bayes_product or bayes_wbeta");
  const double sb = std::sqrt(c.beta);
  const int blocks = c.samples / c.ot_batch;
  const int inner = c.ot_batch / c.batch;
  for (int e = 0; e < c.epochs; ++e) {
    const std::vector<int> perm = st.shuffle.permutation(c.samples);
    for (int o = 0; o < blocks; ++o) {
      const Points b = gather(data, perm, static_cast<std::size_t>(o) * c.ot_batch, static_cast<std::size_t>(c.ot_batch));
      const Points z = st.noise.normal_matrix(d, c.ot_batch);
      Points src(m + d, c.ot_batch), dst(m + d, c.ot_batch);
      src << sb * b.topRows(m), z;
      dst << sb * b.topRows(m), b.bottomRows(d);
      const Assignment match = solve_assignment(src, dst);
      for (int s = 0; s < inner; ++s) {
        Points w0(m, c.batch), x0(d, c.batch), w1(m, c.batch), x1(d, c.batch);
        for (int i = 0; i < c.batch; ++i) {
          const int k = s * c.batch + i;
          const int j = match.perm[static_cast<std::size_t>(k)];
          w0.col(i) = b.col(k).head(m);
          x0.col(i) = z.col(k);
          w1.col(i) = b.col(j).head(m);
          x1.col(i) = b.col(j).tail(d);
        }
        const Vec t = st.draw_times(c.batch);
        st.apply(cfm_loss_bayes(st.net, w0, x0, w1, x1, t));
      }
    }
  }
  return st.finish();
}

TrainResult train(const TrainConfig& config) {
  switch (config.coupling) {
    case Coupling::independent: return train_product(config);
    case Coupling::minibatch_ot: return train_minibatch_ot(config);
    case Coupling::lipman: return train_lipman(config);
    case Coupling::bayes_product:
    case Coupling::bayes_wbeta: return train_bayes(config);
  }
  throw ValidationError("train: unknown coupling");
}

}  // namespace flowlab
