#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowlab/linalg.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

enum class Activation : std::uint32_t { silu = 0, tanh = 1 };

/// What a network's output means; stored in checkpoints so tools can pick the
/// right sampler.
enum class NetRole : std::uint32_t { velocity = 0, conditional_velocity = 1, score = 2 };

struct MlpArch {
  int dim = 2;
  int cond_dim = 0;
  /// Number of (sin 2 pi k t, cos 2 pi k t) pairs appended to the raw t.
  int time_pairs = 8;
  std::vector<int> hidden{128, 128, 128};
  Activation activation = Activation::silu;
  NetRole role = NetRole::velocity;

  int time_dim() const { return 1 + 2 * time_pairs; }
  int input_dim() const { return dim + cond_dim + time_dim(); }
  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_in(int l) const { return l == 0 ? input_dim() : hidden[static_cast<std::size_t>(l - 1)]; }
  int layer_out(int l) const { return l + 1 == num_layers() ? dim : hidden[static_cast<std::size_t>(l)]; }
  std::size_t param_count() const;
  bool operator==(const MlpArch&) const = default;
};

/// Activations, pre-activations and inputs of a batched forward pass.
struct MlpTape {
  std::vector<Mat> a;  // a[0] = input features, a[l] = sigma(z[l-1])
  std::vector<Mat> z;  // pre-activations per layer; z.back() is the output
};

/// Fully connected network  [x; w; t-features] -> R^dim.
///
/// Parameters live in one flat vector; layer l stores its out x in weight
/// matrix column-major, followed by the bias.
class Mlp {
 public:
  Mlp() = default;
  /// All-zero parameters.
  explicit Mlp(MlpArch arch);
  Mlp(MlpArch arch, Vec params);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; the last layer
  /// is zero unless `zero_last` is false.
  static Mlp init(const MlpArch& arch, Rng& rng, bool zero_last = true);

  const MlpArch& arch() const { return arch_; }
  int dim() const { return arch_.dim; }
  int cond_dim() const { return arch_.cond_dim; }
  const Vec& params() const { return theta_; }
  Vec& params() { return theta_; }
  std::size_t param_count() const { return static_cast<std::size_t>(theta_.size()); }

  Eigen::Map<const Mat> weight(int l) const;
  Eigen::Map<const Vec> bias(int l) const;
  Eigen::Map<Mat> weight(int l);
  Eigen::Map<Vec> bias(int l);
  std::size_t weight_offset(int l) const { return offsets_[static_cast<std::size_t>(l)]; }

  /// Input feature vector [x; w; t; sin(2 pi k t); cos(2 pi k t)].
  Vec features(double t, const Vec& x, const Vec& w = Vec()) const;
  /// Feature matrix for a batch; t has one entry per column (or a single entry).
  Mat features_batch(const Vec& t, const Points& x, const Points& w = Points()) const;

  Vec forward(double t, const Vec& x, const Vec& w = Vec()) const;
  Points forward_batch(const Vec& t, const Points& x, const Points& w = Points()) const;
  /// Batched forward from precomputed features, optionally recording a tape.
  Mat forward_features(const Mat& feats, MlpTape* tape = nullptr) const;
  /// Reverse pass: gradient of sum_j <cot_j, out_j> with respect to the
  /// parameters; optionally also with respect to the input features.
  Vec backward(const MlpTape& tape, const Mat& cot_out, Mat* cot_features = nullptr) const;

  /// a^T dv/dtheta and a^T dv/dx at a single point.
  Vec vjp_params(double t, const Vec& x, const Vec& cot, const Vec& w = Vec()) const;
  Vec vjp_input(double t, const Vec& x, const Vec& cot, const Vec& w = Vec()) const;
  /// (dv/dx) u.
  Vec jvp_input(double t, const Vec& x, const Vec& u, const Vec& w = Vec()) const;
  Mat jacobian_x(double t, const Vec& x, const Vec& w = Vec()) const;
  /// Exact trace of dv/dx from dim forward tangents; requires dim <= 16.
  double divergence(double t, const Vec& x, const Vec& w = Vec()) const;

  struct DivGrad {
    Vec value;
    double div = 0.0;
    Vec grad_x;
    Vec grad_theta;
  };
  /// Value, divergence and the gradients in x and theta of
  /// <cot_v, v(t, x)> + cot_div * div v(t, x), via reverse mode over the
  /// forward tangent passes (second-order terms included).
  DivGrad value_div_grad(double t, const Vec& x, const Vec& cot_v, double cot_div, const Vec& w = Vec()) const;

  static constexpr int kMaxExactDivergenceDim = 16;

 private:
  void build_offsets();

  MlpArch arch_;
  Vec theta_;
  std::vector<std::size_t> offsets_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Vec m;
  Vec v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, Eigen::Index n) : config(cfg), m(Vec::Zero(n)), v(Vec::Zero(n)) {}
};

/// Bias-corrected Adam update in place. Throws NumericalError("diverged") on a
/// non-finite gradient.
void adam_step(AdamState& state, Vec& theta, const Vec& grad);

void save_checkpoint(std::ostream& out, const Mlp& net);
Mlp load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Mlp& net);
Mlp load_checkpoint(const std::string& path);

}  // namespace flowlab
