#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowlab/measures.hpp"

namespace flowlab {

/// Y = A X + noise with X ~ prior (GMM on R^d), noise ~ N(0, S) on R^m.
struct LinearInverseProblem {
  GmmMeasure prior;
  Mat a;
  GaussianMeasure noise;

  Eigen::Index d() const { return prior.dim(); }
  Eigen::Index m() const { return a.rows(); }
};

constexpr std::uint64_t kDefaultPriorSeed = 1;

/// d = m = 5, ten equally weighted modes with means uniform in [-1, 1]^5
/// (drawn from stream (prior_seed, "bayes_prior_means")), standard deviation 0.1,
/// A = diag(0.1 / i), noise N(0, 0.1 I).
LinearInverseProblem default_inverse_problem(std::uint64_t prior_seed = kDefaultPriorSeed);

struct Observations {
  Points y;  // m x n
  Points x;  // d x n
};

Observations simulate(const LinearInverseProblem& problem, Eigen::Index n, Rng& rng);
Observations simulate(const LinearInverseProblem& problem, Eigen::Index n, Seed seed);

/// Component-wise Gaussian conditioning: C_k = (S_k^-1 + A^T N^-1 A)^-1,
/// mean C_k (S_k^-1 m_k + A^T N^-1 y), weight proportional to
/// w_k N(y; A m_k, A S_k A^T + N).
GmmMeasure analytic_posterior(const LinearInverseProblem& problem, const Vec& y);

/// 16 held-out observations from stream (seed, "eval_y") unless count says otherwise.
Points evaluation_observations(const LinearInverseProblem& problem, Seed seed, Eigen::Index count = 16);

/// Posterior sampler under test: (y, n, seed) -> d x n samples.
using PosteriorSampler = std::function<Points(const Vec&, Eigen::Index, Seed)>;

struct PosteriorFitRow {
  int y_id = 0;
  std::string coord;
  std::string metric;
  double value = 0.0;
};

struct PosteriorFitReport {
  std::vector<PosteriorFitRow> rows;
  /// Per observation and coordinate: flow-vs-oracle and oracle-vs-oracle 1-D W2.
  Mat w2_flow;   // count x d
  Mat w2_floor;  // count x d
  /// Observations where every coordinate satisfies w2_flow < factor * w2_floor.
  int passing(double factor) const;
};

/// For each y: n oracle samples, n sampler samples and n more oracle samples for
/// the resampling floor; per-coordinate 1-D W2 by sorting and pairwise 2-D W2 by
/// exact assignment on the first min(n, 512) points.
PosteriorFitReport eval_posterior_fit(const PosteriorSampler& sampler, const LinearInverseProblem& problem,
                                      const Points& ys, Eigen::Index n, Seed seed, bool pairwise = true);

void write_report_csv(std::ostream& out, const PosteriorFitReport& report);

/// Histogram dump (y_id,coord,source,bin_lo,bin_hi,count) for plotting.
void write_histograms_csv(std::ostream& out, int y_id, const Points& flow, const Points& oracle, int bins);

}  // namespace flowlab
