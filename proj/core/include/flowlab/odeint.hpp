#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "flowlab/fields.hpp"

namespace flowlab {

enum class OdeMethod { euler, rk4 };
enum class Direction { forward, backward };

struct SolverSpec {
  OdeMethod method = OdeMethod::rk4;
  int steps = 100;
  Direction direction = Direction::forward;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  /// Log-density change l(t) when integrated jointly; empty otherwise.
  std::vector<double> logdet;
};

/// Fixed-step integration of dx/dt = v(t, x) from t0 to t1 (t1 < t0 integrates
/// backwards). Throws NumericalError("blow-up at t=...") on non-finite states.
Trajectory integrate(const VelocityField& field, const Vec& x0, double t0, double t1, const SolverSpec& spec);

/// Endpoints of many trajectories integrated together (batched field evaluation).
Points integrate_batch(const VelocityField& field, const Points& x0, double t0, double t1, const SolverSpec& spec,
                       std::vector<Points>* path = nullptr);

using BatchVelocity = std::function<Points(double, const Points&)>;
Points integrate_batch(const BatchVelocity& f, const Points& x0, double t0, double t1, const SolverSpec& spec,
                       std::vector<Points>* path = nullptr);

constexpr double kDefaultTimeClip = 1e-3;

/// Draws n points of N(0, I_dim) from stream (seed, "sample_flow") and carries
/// them from eps to 1 - eps (reversed for Direction::backward).
Points sample_flow(const VelocityField& field, Eigen::Index dim, Eigen::Index n, const SolverSpec& spec, Seed seed,
                   double eps = kDefaultTimeClip);

/// Conditional counterpart of sample_flow: column j starts from the j-th latent
/// draw and is carried by net(t, x, w_j).
Points sample_conditional(const Mlp& net, const Points& w, const SolverSpec& spec, Seed seed,
                          double eps = kDefaultTimeClip);

/// Mean distance of interior states from the chord joining the endpoints,
/// divided by the chord length. 0 for a degenerate chord.
double straightness(const Trajectory& traj);
double straightness(const std::vector<Vec>& states);
/// Mean straightness over the columns of a batched path.
double mean_straightness(const std::vector<Points>& path);

struct LogDensityResult {
  Vec endpoint;
  /// l(t1) = -int div v along the trajectory, so log p_t1(x(t1)) = log p_t0(x0) + l.
  double l = 0.0;
};

LogDensityResult logdensity_flow(const VelocityField& field, const Vec& x, double t0, double t1,
                                 const SolverSpec& spec, Trajectory* traj = nullptr);

/// Mean of l(1, x) - log N(psi(1, x); 0, I) over the data columns; the field is
/// in CNF orientation (data at t = 0, latent at t = 1).
double cnf_nll(const VelocityField& field, const Points& data, const SolverSpec& spec);
double cnf_nll(const Mlp& net, const Points& data, const SolverSpec& spec);

struct CnfGradient {
  double nll = 0.0;
  Vec grad;
};

/// Gradient of cnf_nll in the network parameters by the adjoint method: the
/// state is re-integrated backwards jointly with a^x and a^theta; the
/// log-density channel enters through the gradients of -div v.
CnfGradient adjoint_gradient(const Mlp& net, const Points& data, const SolverSpec& spec);

/// A field v(t, z; theta) with reverse-mode products, for terminal-cost adjoints.
struct ParametricField {
  std::function<Vec(double, const Vec&, const Vec&)> value;
  /// Returns (a^T dv/dz, a^T dv/dtheta).
  std::function<std::pair<Vec, Vec>(double, const Vec&, const Vec&, const Vec&)> vjp;
};

/// dF(psi(1, x0))/dtheta for the flow of `field` on [0, 1], with grad_f the
/// gradient of F at the endpoint.
Vec adjoint_terminal_gradient(const ParametricField& field, const Vec& theta, const Vec& x0,
                              const std::function<Vec(const Vec&)>& grad_f, const SolverSpec& spec);

void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace flowlab
