#include "flowlab/rng.hpp"

#include <cmath>
#include <numbers>

#include "flowlab/error.hpp"

namespace flowlab {

namespace {
constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a, 64 bit.
std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(Seed seed, std::string_view tag)
    : key_(splitmix64_mix(splitmix64_mix(seed.value) ^ hash_tag(tag))) {}

Rng Rng::substream(std::string_view tag) const {
  return Rng(splitmix64_mix(key_ ^ splitmix64_mix(hash_tag(tag))));
}

Rng Rng::substream(std::uint64_t index) const {
  return Rng(splitmix64_mix(key_ + splitmix64_mix(index + 0x632BE59BD9B4E019ULL)));
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return splitmix64_mix(key_ + counter_ * kGoldenGamma);
}

double Rng::uniform() {
  // 53 random bits, shifted to the cell midpoint so 0 and 1 never occur.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(angle);
  has_cached_normal_ = true;
  return r * std::cos(angle);
}

std::uint64_t Rng::index(std::uint64_t n) {
  require(n > 0, "Rng::index: empty range");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

std::size_t Rng::categorical(const Eigen::VectorXd& weights) {
  const double total = weights.sum();
  require(total > 0.0, "Rng::categorical: weights sum to zero");
  const double u = uniform() * total;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<std::size_t>(k);
  }
  // Rounding can leave u == total; fall back to the last positive weight.
  for (Eigen::Index k = weights.size() - 1; k >= 0; --k) {
    if (weights[k] > 0.0) return static_cast<std::size_t>(k);
  }
  return 0;
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index d) {
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
  return v;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index d, Eigen::Index n) {
  Eigen::MatrixXd m(d, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < d; ++i) m(i, j) = normal();
  return m;
}

Eigen::VectorXd Rng::uniform_vector(Eigen::Index n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform(lo, hi);
  return v;
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(index(static_cast<std::uint64_t>(i + 1)));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

}  // namespace flowlab
