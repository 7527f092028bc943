#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace flowlab {

struct Seed {
  std::uint64_t value = 0;
};

/// SplitMix64 run in counter mode.
///
/// A stream is identified by a 64-bit key derived from (seed, purpose tag);
/// the i-th output is splitmix64_mix(key + (i + 1) * golden_gamma). Outputs
/// depend only on (seed, tag, i), so callers that partition work by tag get
/// reproducible, independent streams regardless of call interleaving between
/// streams. Gaussians use Box-Muller with the second variate cached.
class Rng {
 public:
  Rng(Seed seed, std::string_view tag);

  /// Child stream keyed by this stream's key and a further tag.
  Rng substream(std::string_view tag) const;
  Rng substream(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);
  /// Categorical draw from nonnegative weights (need not be normalised).
  std::size_t categorical(const Eigen::VectorXd& weights);

  Eigen::VectorXd normal_vector(Eigen::Index d);
  /// d x n matrix of independent standard normals, column by column.
  Eigen::MatrixXd normal_matrix(Eigen::Index d, Eigen::Index n);
  Eigen::VectorXd uniform_vector(Eigen::Index n, double lo, double hi);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);
std::uint64_t hash_tag(std::string_view tag);

}  // namespace flowlab
