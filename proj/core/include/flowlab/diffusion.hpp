#pragma once

#include <cstdint>
#include <vector>

#include "flowlab/fields.hpp"
#include "flowlab/odeint.hpp"
#include "flowlab/score.hpp"
#include "flowlab/training.hpp"

namespace flowlab {

/// X_t = b_t X_0 + sqrt(1 - b_t^2) Z, column-wise.
Points forward_sample(const VpSchedule& s, const Points& x0, double t, Rng& rng);
Points forward_sample(const VpSchedule& s, const Points& x0, double t, Seed seed);

/// -(x - b_t x0) / (1 - b_t^2); throws "degenerate conditional" at t <= 0.
Vec conditional_score(const VpSchedule& s, const Vec& x, const Vec& x0, double t);

/// Denoising score matching mean_i || s(t_i, x_i) + (x_i - b x0_i) / (1 - b^2) ||^2
/// with x_i drawn by forward_sample from stream (seed, "dsm").
LossGrad dsm_loss(const Mlp& net, const VpSchedule& s, const Points& x0, const Vec& t, Seed seed, bool scaled = true);
/// Same loss with the noise supplied, for an arbitrary score source (value only).
double dsm_loss_value(const ScoreSource& src, const VpSchedule& s, const Points& x0, const Vec& t, const Points& z);

constexpr double kDiffusionTimeClip = 1e-3;

/// Euler-Maruyama on the reverse VP SDE from tau = T down to t_min, starting at N(0, I).
Points reverse_sde_sample(const ScoreSource& src, const VpSchedule& s, Eigen::Index dim, Eigen::Index n, int steps,
                          Seed seed, double t_min = kDiffusionTimeClip);

/// Probability-flow ODE from T down to t_min (RK4 unless spec says otherwise).
Points prob_flow_sample(const ScoreSource& src, const VpSchedule& s, Eigen::Index dim, Eigen::Index n,
                        const SolverSpec& spec, Seed seed, double t_min = kDiffusionTimeClip);

/// 1-D two-mode law 0.5 N(-2, 0.25) + 0.5 N(2, 0.25).
GmmMeasure diffusion_toy_prior();

struct DiffusionConfig {
  GmmMeasure prior = diffusion_toy_prior();
  VpSchedule schedule;
  int steps = 4000;
  int batch = 256;
  double t_min = kDiffusionTimeClip;
  bool scaled = true;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::vector<int> hidden{64, 64};
  int time_pairs = 4;
  Activation activation = Activation::silu;
};

/// Trains a score network on fresh prior draws each step (t uniform on [t_min, T]).
TrainResult train_score(const DiffusionConfig& config);

struct ScoreDeviation {
  double max_abs = 0.0;
  int points = 0;
};

/// Max |s_net - s_true| over grid points (t, x) where the exact marginal
/// density is at least rel_density times its maximum over the x-grid at that t.
ScoreDeviation score_grid_deviation(const ScoreSource& learned, const GmmMeasure& prior, const VpSchedule& s,
                                    const Vec& t_grid, const Vec& x_grid, double rel_density);

}  // namespace flowlab
