#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowlab/bayes.hpp"
#include "flowlab/datasets.hpp"
#include "flowlab/fields.hpp"
#include "flowlab/nn.hpp"

namespace flowlab {

enum class Coupling { independent, minibatch_ot, lipman, bayes_product, bayes_wbeta };

Coupling parse_coupling(const std::string& s);
std::string to_string(Coupling c);

struct TrainConfig {
  /// gmm8 | moons | spirals (unconditional), bayes5d | labels2 (conditional).
  std::string target = "gmm8";
  Coupling coupling = Coupling::independent;
  double lipman_r = 0.99;
  double beta = 100.0;
  int batch = 256;
  int ot_batch = 256;
  int epochs = 40;
  /// Number of target samples drawn once per run (N_t).
  int samples = 51200;
  AdamConfig adam;
  std::uint64_t seed = 0;
  double eps = 1e-3;
  std::vector<int> hidden{128, 128, 128};
  int time_pairs = 8;
  Activation activation = Activation::silu;
  std::uint64_t prior_seed = kDefaultPriorSeed;

  bool conditional() const;
  /// Dimensions of the condition block and of the state block.
  int cond_dim() const;
  int state_dim() const;
  MlpArch arch() const;
  /// Throws ValidationError for inconsistent settings.
  void validate() const;
};

struct LossReport {
  std::vector<double> loss;
  /// Mean of the last (up to) 100 losses at each step.
  std::vector<double> running_mean;
  double wall_seconds = 0.0;
  std::int64_t steps = 0;

  void push(double value);
};

/// Writes step,loss,running_mean (wall-clock is omitted so reruns compare bitwise).
void write_loss_csv(std::ostream& out, const LossReport& report);

struct TrainResult {
  Mlp net;
  LossReport report;
};

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

/// mean_i || u(t_i, (1 - t_i) x0_i + t_i x1_i) - (x1_i - x0_i) ||^2 and its parameter gradient.
LossGrad fm_loss_product(const Mlp& net, const Points& x0, const Points& x1, const Vec& t);
/// mean_i || u(t_i, (1 - t_i r) z_i + t_i y_i) - (y_i - r z_i) ||^2.
LossGrad fm_loss_lipman(const Mlp& net, double r, const Points& y, const Points& z, const Vec& t);
/// Conditional loss on the state block: the network sees the interpolated
/// condition (1 - t) w0 + t w1 and the interpolated state; the target is x1 - x0.
LossGrad cfm_loss_bayes(const Mlp& net, const Points& w0, const Points& x0, const Points& w1, const Points& x1,
                        const Vec& t);

/// Same residual loss for an arbitrary field (value only).
double fm_loss_field(const VelocityField& field, const Points& x0, const Points& x1, const Vec& t);

/// Joint (condition, state) sampler for conditional targets: returns (m + d) x n.
TargetSampler conditional_sampler(const TrainConfig& config);

TrainResult train_product(const TrainConfig& config);
TrainResult train_product(const TrainConfig& config, const TargetSampler& target);
TrainResult train_minibatch_ot(const TrainConfig& config);
TrainResult train_minibatch_ot(const TrainConfig& config, const TargetSampler& target);
TrainResult train_lipman(const TrainConfig& config);
TrainResult train_lipman(const TrainConfig& config, const TargetSampler& target);
TrainResult train_bayes(const TrainConfig& config);
TrainResult train_bayes(const TrainConfig& config, const TargetSampler& joint);

/// Dispatch on config.coupling.
TrainResult train(const TrainConfig& config);

}  // namespace flowlab
