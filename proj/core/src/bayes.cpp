#include "flowlab/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Cholesky>

#include "flowlab/error.hpp"
#include "flowlab/plan_io.hpp"
#include "flowlab/transport.hpp"

namespace flowlab {

LinearInverseProblem default_inverse_problem(std::uint64_t prior_seed) {
  constexpr int d = 5;
  constexpr int modes = 10;
  Rng rng(Seed{prior_seed}, "bayes_prior_means");
  std::vector<GaussianMeasure> comps;
  for (int k = 0; k < modes; ++k) comps.push_back(GaussianMeasure::isotropic(rng.uniform_vector(d, -1.0, 1.0), 0.01));
  Mat a = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i) a(i, i) = 0.1 / (i + 1);
  return {GmmMeasure(Vec::Constant(modes, 1.0 / modes), std::move(comps)), a,
          GaussianMeasure::isotropic(Vec::Zero(d), 0.1)};
}

Observations simulate(const LinearInverseProblem& problem, Eigen::Index n, Rng& rng) {
  require(problem.a.cols() == problem.d() && problem.noise.dim() == problem.m(), "simulate: inconsistent problem");
  Observations o;
  o.x = sample(Measure(problem.prior), n, rng);
  o.y = problem.a * o.x;
  for (Eigen::Index j = 0; j < n; ++j) o.y.col(j) += problem.noise.sample(rng);
  return o;
}

Observations simulate(const LinearInverseProblem& problem, Eigen::Index n, Seed seed) {
  Rng rng(seed, "simulate");
  return simulate(problem, n, rng);
}

GmmMeasure analytic_posterior(const LinearInverseProblem& problem, const Vec& y) {
  require(y.size() == problem.m(), "analytic_posterior: observation dimension mismatch");
  const Mat& a = problem.a;
  const Mat ninv = problem.noise.precision();
  const Mat at_ninv = a.transpose() * ninv;
  const Mat data_prec = at_ninv * a;
  const auto k = static_cast<Eigen::Index>(problem.prior.size());
  Vec logw(k);
  std::vector<GaussianMeasure> comps;
  comps.reserve(problem.prior.size());
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& c = problem.prior.components()[static_cast<std::size_t>(i)];
    const Mat sinv = c.precision();
    Mat prec = sinv + data_prec;
    prec = 0.5 * (prec + prec.transpose());
    Eigen::LLT<Mat> llt(prec);
    require(llt.info() == Eigen::Success, "analytic_posterior: posterior precision not SPD");
    Mat cov = llt.solve(Mat::Identity(prec.rows(), prec.cols()));
    cov = 0.5 * (cov + cov.transpose());
    Vec mean = llt.solve(sinv * c.mean() + at_ninv * y);
    Mat ev = a * c.cov() * a.transpose() + problem.noise.cov();
    ev = 0.5 * (ev + ev.transpose());
    const GaussianMeasure evidence(a * c.mean(), ev);
    const double w = problem.prior.weights()[i];
    logw[i] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) + evidence.log_density(y);
    comps.emplace_back(std::move(mean), std::move(cov));
  }
  Vec w = softmax(logw);
  w /= w.sum();
  return GmmMeasure(std::move(w), std::move(comps));
}

Points evaluation_observations(const LinearInverseProblem& problem, Seed seed, Eigen::Index count) {
  Rng rng(seed, "eval_y");
  return simulate(problem, count, rng).y;
}

int PosteriorFitReport::passing(double factor) const {
  int n = 0;
  for (Eigen::Index i = 0; i < w2_flow.rows(); ++i)
    if ((w2_flow.row(i).array() < factor * w2_floor.row(i).array()).all()) ++n;
  return n;
}

PosteriorFitReport eval_posterior_fit(const PosteriorSampler& sampler, const LinearInverseProblem& problem,
                                      const Points& ys, Eigen::Index n, Seed seed, bool pairwise) {
  require(n >= 1, "eval_posterior_fit: need at least one sample per observation");
  require(ys.rows() == problem.m(), "eval_posterior_fit: observation dimension mismatch");
  const Eigen::Index d = problem.d();
  const Eigen::Index count = ys.cols();
  PosteriorFitReport rep;
  rep.w2_flow.resize(count, d);
  rep.w2_floor.resize(count, d);
  const Rng base(seed, "eval_posterior_fit");
  for (Eigen::Index i = 0; i < count; ++i) {
    const Vec y = ys.col(i);
    const Measure post = analytic_posterior(problem, y);
    Rng r = base.substream(static_cast<std::uint64_t>(i));
    const Points oracle = sample(post, n, r);
    const Points oracle2 = sample(post, n, r);
    const Points flow = sampler(y, n, Seed{r.next_u64()});
    require(flow.rows() == d && flow.cols() == n, "eval_posterior_fit: sampler returned wrong shape");
    const int id = static_cast<int>(i);
    for (Eigen::Index c = 0; c < d; ++c) {
      rep.w2_flow(i, c) = w2_sorted_1d(flow.row(c).transpose(), oracle.row(c).transpose());
      rep.w2_floor(i, c) = w2_sorted_1d(oracle2.row(c).transpose(), oracle.row(c).transpose());
      const std::string coord = std::to_string(c + 1);
      rep.rows.push_back({id, coord, "w2_1d", rep.w2_flow(i, c)});
      rep.rows.push_back({id, coord, "w2_1d_floor", rep.w2_floor(i, c)});
    }
    if (!pairwise) continue;
    const Eigen::Index m = std::min<Eigen::Index>(n, kMaxExactAtoms);
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = a + 1; b < d; ++b) {
        Points pf(2, m), po(2, m), po2(2, m);
        pf << flow.row(a).head(m), flow.row(b).head(m);
        po << oracle.row(a).head(m), oracle.row(b).head(m);
        po2 << oracle2.row(a).head(m), oracle2.row(b).head(m);
        const std::string coord = std::to_string(a + 1) + ":" + std::to_string(b + 1);
        rep.rows.push_back({id, coord, "w2_2d", w2_empirical(pf, po)});
        rep.rows.push_back({id, coord, "w2_2d_floor", w2_empirical(po2, po)});
      }
  }
  return rep;
}

void write_report_csv(std::ostream& out, const PosteriorFitReport& report) {
  out << "y_id,coord,metric,value\n";
  for (const auto& r : report.rows) out << r.y_id << ',' << r.coord << ',' << r.metric << ',' << format_double(r.value) << '\n';
}

void write_histograms_csv(std::ostream& out, int y_id, const Points& flow, const Points& oracle, int bins) {
  require(bins >= 1, "write_histograms_csv: need at least one bin");
  require(flow.rows() == oracle.rows(), "write_histograms_csv: dimension mismatch");
  for (Eigen::Index c = 0; c < flow.rows(); ++c) {
    const double lo = std::min(flow.row(c).minCoeff(), oracle.row(c).minCoeff());
    double hi = std::max(flow.row(c).maxCoeff(), oracle.row(c).maxCoeff());
    if (hi <= lo) hi = lo + 1.0;
    const double width = (hi - lo) / bins;
    for (int s = 0; s < 2; ++s) {
      const Points& p = s == 0 ? flow : oracle;
      std::vector<long> counts(static_cast<std::size_t>(bins), 0);
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        auto b = static_cast<int>((p(c, j) - lo) / width);
        counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += 1;
      }
      for (int b = 0; b < bins; ++b)
        out << y_id << ',' << (c + 1) << ',' << (s == 0 ? "flow" : "oracle") << ',' << format_double(lo + b * width)
            << ',' << format_double(lo + (b + 1) * width) << ',' << counts[static_cast<std::size_t>(b)] << '\n';
    }
  }
}

}  // namespace flowlab
