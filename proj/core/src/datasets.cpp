#include "flowlab/datasets.hpp"

#include <cmath>
#include <numbers>

#include "flowlab/error.hpp"

namespace flowlab {

GmmMeasure gmm8(double radius, double variance) {
  std::vector<GaussianMeasure> comps;
  for (int k = 0; k < 8; ++k) {
    const double ang = 2.0 * std::numbers::pi * k / 8.0;
    Vec m(2);
    m << radius * std::cos(ang), radius * std::sin(ang);
    comps.push_back(GaussianMeasure::isotropic(m, variance));
  }
  return GmmMeasure(Vec::Constant(8, 1.0 / 8.0), std::move(comps));
}

Points sample_moons(Eigen::Index n, Rng& rng) {
  Points out(2, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double th = std::numbers::pi * rng.uniform();
    const bool upper = rng.uniform() < 0.5;
    if (upper) {
      out(0, j) = std::cos(th);
      out(1, j) = std::sin(th);
    } else {
      out(0, j) = 1.0 - std::cos(th);
      out(1, j) = 0.5 - std::sin(th);
    }
    out(0, j) += 0.1 * rng.normal();
    out(1, j) += 0.1 * rng.normal();
  }
  return out;
}

Points sample_spirals(Eigen::Index n, Rng& rng) {
  Points out(2, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double th = 3.0 * std::numbers::pi * std::sqrt(rng.uniform());
    const double sign = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double r = th / std::numbers::pi;
    out(0, j) = sign * r * std::cos(th) + 0.1 * rng.normal();
    out(1, j) = sign * r * std::sin(th) + 0.1 * rng.normal();
  }
  return out;
}

double labels2_class_mean(int label) { return label == 0 ? -2.0 : 2.0; }

Points sample_labels2(Eigen::Index n, Rng& rng) {
  Points out(2, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int c = rng.uniform() < 0.5 ? 0 : 1;
    out(0, j) = c;
    out(1, j) = labels2_class_mean(c) + 0.5 * rng.normal();
  }
  return out;
}

TargetSampler measure_sampler(Measure m) {
  return [m = std::move(m)](Eigen::Index n, Rng& rng) { return sample(m, n, rng); };
}

TargetSampler dataset_sampler(const std::string& name) {
  if (name == "gmm8") return measure_sampler(gmm8());
  if (name == "moons") return sample_moons;
  if (name == "spirals") return sample_spirals;
  throw ValidationError("unknown dataset '" + name + "' (expected gmm8, moons or spirals)");
}

Eigen::Index dataset_dim(const std::string& name) {
  if (name == "gmm8" || name == "moons" || name == "spirals") return 2;
  throw ValidationError("unknown dataset '" + name + "' (expected gmm8, moons or spirals)");
}

}  // namespace flowlab
