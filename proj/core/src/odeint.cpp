#include "flowlab/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <ostream>
#include <sstream>

#include "flowlab/error.hpp"
#include "flowlab/plan_io.hpp"

namespace flowlab {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

template <class S, class F>
S ode_step(const F& f, double t, const S& x, double h, OdeMethod method) {
  if (method == OdeMethod::euler) return x + h * f(t, x);
  const S k1 = f(t, x);
  const S k2 = f(t + 0.5 * h, S(x + (0.5 * h) * k1));
  const S k3 = f(t + 0.5 * h, S(x + (0.5 * h) * k2));
  const S k4 = f(t + h, S(x + h * k3));
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

[[noreturn]] void blow_up(double t, const char* what = "blow-up") {
  std::ostringstream s;
  s << what << " at t=" << t;
  throw NumericalError(s.str());
}

double time_at(double t0, double t1, int k, int n) {
  return k == n ? t1 : t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(n);
}

void check_spec(const SolverSpec& spec) { require(spec.steps >= 1, "solver: step count must be >= 1"); }

double std_normal_logpdf(const Vec& z) {
  return -0.5 * (static_cast<double>(z.size()) * kLog2Pi + z.squaredNorm());
}

std::shared_ptr<const Mlp> borrow(const Mlp& net) {
  return std::shared_ptr<const Mlp>(&net, [](const Mlp*) {});
}

}  // namespace

Trajectory integrate(const VelocityField& field, const Vec& x0, double t0, double t1, const SolverSpec& spec) {
  check_spec(spec);
  const int n = spec.steps;
  Trajectory traj;
  traj.times.reserve(static_cast<std::size_t>(n) + 1);
  traj.states.reserve(static_cast<std::size_t>(n) + 1);
  traj.times.push_back(t0);
  traj.states.push_back(x0);
  auto f = [&](double t, const Vec& x) -> Vec { return field.eval(t, x); };
  Vec x = x0;
  for (int k = 0; k < n; ++k) {
    const double ta = time_at(t0, t1, k, n);
    const double tb = time_at(t0, t1, k + 1, n);
    x = ode_step(f, ta, x, tb - ta, spec.method);
    if (!x.allFinite()) blow_up(tb);
    traj.times.push_back(tb);
    traj.states.push_back(x);
  }
  return traj;
}

Points integrate_batch(const VelocityField& field, const Points& x0, double t0, double t1, const SolverSpec& spec,
                       std::vector<Points>* path) {
  return integrate_batch(BatchVelocity([&](double t, const Points& x) { return field.eval_batch(t, x); }), x0, t0,
                         t1, spec, path);
}

Points integrate_batch(const BatchVelocity& f, const Points& x0, double t0, double t1, const SolverSpec& spec,
                       std::vector<Points>* path) {
  check_spec(spec);
  const int n = spec.steps;
  Points x = x0;
  if (path) {
    path->clear();
    path->push_back(x);
  }
  for (int k = 0; k < n; ++k) {
    const double ta = time_at(t0, t1, k, n);
    const double tb = time_at(t0, t1, k + 1, n);
    x = ode_step(f, ta, x, tb - ta, spec.method);
    if (!x.allFinite()) blow_up(tb);
    if (path) path->push_back(x);
  }
  return x;
}

Points sample_flow(const VelocityField& field, Eigen::Index dim, Eigen::Index n, const SolverSpec& spec, Seed seed,
                   double eps) {
  require(n >= 0, "sample_flow: negative sample count");
  require(eps >= 0.0 && eps < 0.5, "sample_flow: time clip must lie in [0, 0.5)");
  if (n == 0) return Points(dim, 0);
  Rng rng(seed, "sample_flow");
  const Points z = rng.normal_matrix(dim, n);
  if (spec.direction == Direction::backward) return integrate_batch(field, z, 1.0 - eps, eps, spec);
  return integrate_batch(field, z, eps, 1.0 - eps, spec);
}

Points sample_conditional(const Mlp& net, const Points& w, const SolverSpec& spec, Seed seed, double eps) {
  require(w.rows() == net.cond_dim(), "sample_conditional: condition dimension mismatch");
  require(eps >= 0.0 && eps < 0.5, "sample_conditional: time clip must lie in [0, 0.5)");
  if (w.cols() == 0) return Points(net.dim(), 0);
  Rng rng(seed, "sample_flow");
  const Points z = rng.normal_matrix(net.dim(), w.cols());
  BatchVelocity f = [&](double t, const Points& x) -> Points {
    return net.forward_batch(Vec::Constant(1, t), x, w);
  };
  if (spec.direction == Direction::backward) return integrate_batch(f, z, 1.0 - eps, eps, spec);
  return integrate_batch(f, z, eps, 1.0 - eps, spec);
}

double straightness(const std::vector<Vec>& states) {
  require(states.size() >= 3, "straightness: need at least 3 states");
  const Vec& a = states.front();
  const Vec& b = states.back();
  const Vec chord = b - a;
  const double len2 = chord.squaredNorm();
  if (len2 == 0.0) return 0.0;
  double total = 0.0;
  for (std::size_t k = 1; k + 1 < states.size(); ++k) {
    const Vec p = states[k] - a;
    const double s = std::clamp(p.dot(chord) / len2, 0.0, 1.0);
    total += (p - s * chord).norm();
  }
  return total / static_cast<double>(states.size() - 2) / std::sqrt(len2);
}

double straightness(const Trajectory& traj) { return straightness(traj.states); }

double mean_straightness(const std::vector<Points>& path) {
  require(path.size() >= 3, "straightness: need at least 3 states");
  const Eigen::Index n = path.front().cols();
  require(n >= 1, "mean_straightness: empty batch");
  double total = 0.0;
  std::vector<Vec> states(path.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < path.size(); ++k) states[k] = path[k].col(j);
    total += straightness(states);
  }
  return total / static_cast<double>(n);
}

LogDensityResult logdensity_flow(const VelocityField& field, const Vec& x, double t0, double t1,
                                 const SolverSpec& spec, Trajectory* traj) {
  check_spec(spec);
  const Eigen::Index d = x.size();
  auto f = [&](double t, const Vec& s) -> Vec {
    Vec out(d + 1);
    const Vec z = s.head(d);
    out.head(d) = field.eval(t, z);
    out[d] = -field.divergence(t, z);
    return out;
  };
  Vec s(d + 1);
  s.head(d) = x;
  s[d] = 0.0;
  if (traj) {
    *traj = Trajectory{};
    traj->times.push_back(t0);
    traj->states.push_back(x);
    traj->logdet.push_back(0.0);
  }
  const int n = spec.steps;
  for (int k = 0; k < n; ++k) {
    const double ta = time_at(t0, t1, k, n);
    const double tb = time_at(t0, t1, k + 1, n);
    s = ode_step(f, ta, s, tb - ta, spec.method);
    if (!s.allFinite()) blow_up(tb);
    if (traj) {
      traj->times.push_back(tb);
      traj->states.push_back(s.head(d));
      traj->logdet.push_back(s[d]);
    }
  }
  return {s.head(d), s[d]};
}

double cnf_nll(const VelocityField& field, const Points& data, const SolverSpec& spec) {
  require(data.cols() >= 1, "cnf_nll: empty batch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const auto r = logdensity_flow(field, data.col(j), 0.0, 1.0, spec);
    total += r.l - std_normal_logpdf(r.endpoint);
  }
  const double nll = total / static_cast<double>(data.cols());
  if (!std::isfinite(nll)) throw NumericalError("diverged");
  return nll;
}

double cnf_nll(const Mlp& net, const Points& data, const SolverSpec& spec) {
  return cnf_nll(VelocityField(NeuralField{borrow(net), Vec()}), data, spec);
}

namespace {

// Backward sweep of (z, a_z, a_theta) from t = 1 to t = 0. `rhs` returns
// (v, g_z, g_theta) where g are the gradients of the Hamiltonian <a_z, v> (+ l terms).
using AdjointRhs = std::function<void(double, const Vec&, const Vec&, Vec&, Vec&, Vec&)>;

Vec adjoint_sweep(const AdjointRhs& rhs, const Vec& z1, const Vec& a1, Eigen::Index p, const SolverSpec& spec) {
  const Eigen::Index d = z1.size();
  auto f = [&](double t, const Vec& s) -> Vec {
    Vec v, gz, gth;
    rhs(t, s.head(d), s.segment(d, d), v, gz, gth);
    Vec out(2 * d + p);
    out.head(d) = v;
    out.segment(d, d) = -gz;
    out.tail(p) = -gth;
    return out;
  };
  Vec s(2 * d + p);
  s.head(d) = z1;
  s.segment(d, d) = a1;
  s.tail(p).setZero();
  const int n = spec.steps;
  for (int k = 0; k < n; ++k) {
    const double ta = time_at(1.0, 0.0, k, n);
    const double tb = time_at(1.0, 0.0, k + 1, n);
    s = ode_step(f, ta, s, tb - ta, spec.method);
    if (!s.allFinite()) blow_up(tb, "adjoint blow-up");
  }
  return s.tail(p);
}

}  // namespace

CnfGradient adjoint_gradient(const Mlp& net, const Points& data, const SolverSpec& spec) {
  check_spec(spec);
  require(data.rows() == net.dim(), "adjoint_gradient: data dimension mismatch");
  require(data.cols() >= 1, "adjoint_gradient: empty batch");
  const VelocityField field(NeuralField{borrow(net), Vec()});
  const auto p = static_cast<Eigen::Index>(net.param_count());
  CnfGradient out;
  out.grad = Vec::Zero(p);
  double total = 0.0;
  AdjointRhs rhs = [&](double t, const Vec& z, const Vec& az, Vec& v, Vec& gz, Vec& gth) {
    auto r = net.value_div_grad(t, z, az, -1.0);
    v = std::move(r.value);
    gz = std::move(r.grad_x);
    gth = std::move(r.grad_theta);
  };
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const auto fwd = logdensity_flow(field, data.col(j), 0.0, 1.0, spec);
    total += fwd.l - std_normal_logpdf(fwd.endpoint);
    // dF/dz1 for F = l - log N(z1) is z1; the l-channel cotangent is 1.
    out.grad += adjoint_sweep(rhs, fwd.endpoint, fwd.endpoint, p, spec);
  }
  const double inv = 1.0 / static_cast<double>(data.cols());
  out.nll = total * inv;
  out.grad *= inv;
  if (!std::isfinite(out.nll)) throw NumericalError("diverged");
  return out;
}

Vec adjoint_terminal_gradient(const ParametricField& field, const Vec& theta, const Vec& x0,
                              const std::function<Vec(const Vec&)>& grad_f, const SolverSpec& spec) {
  check_spec(spec);
  const VelocityField fwd(CallbackField{[&](double t, const Vec& z) { return field.value(t, z, theta); }, {}});
  const Vec z1 = integrate(fwd, x0, 0.0, 1.0, spec).states.back();
  AdjointRhs rhs = [&](double t, const Vec& z, const Vec& az, Vec& v, Vec& gz, Vec& gth) {
    v = field.value(t, z, theta);
    auto [a, b] = field.vjp(t, z, theta, az);
    gz = std::move(a);
    gth = std::move(b);
  };
  return adjoint_sweep(rhs, z1, grad_f(z1), theta.size(), spec);
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  require(!traj.states.empty(), "write_trajectory_csv: empty trajectory");
  const Eigen::Index d = traj.states.front().size();
  const bool with_l = !traj.logdet.empty();
  out << 't';
  for (Eigen::Index i = 0; i < d; ++i) out << ",x_" << (i + 1);
  if (with_l) out << ",l";
  out << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    out << format_double(traj.times[k]);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(traj.states[k][i]);
    if (with_l) out << ',' << format_double(traj.logdet[k]);
    out << '\n';
  }
}

}  // namespace flowlab
