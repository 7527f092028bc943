#pragma once

#include <functional>
#include <string>

#include "flowlab/measures.hpp"

namespace flowlab {

/// Draws n points (d x n) from a target law.
using TargetSampler = std::function<Points(Eigen::Index, Rng&)>;

/// Eight equally weighted modes on a circle of the given radius, isotropic variance.
GmmMeasure gmm8(double radius = 10.0, double variance = 1.0);

/// Two interleaving half circles with Gaussian jitter (sd 0.1).
Points sample_moons(Eigen::Index n, Rng& rng);
/// Two-arm spiral, radius up to about 3, Gaussian jitter (sd 0.1).
Points sample_spirals(Eigen::Index n, Rng& rng);

/// Labelled 1-D toy: w in {0, 1} with equal probability, x | w ~ N(-2 + 4w, 0.5^2).
/// Returns 2 x n with rows (w, x).
Points sample_labels2(Eigen::Index n, Rng& rng);
double labels2_class_mean(int label);

TargetSampler measure_sampler(Measure m);
/// Samplers for "gmm8", "moons", "spirals".
TargetSampler dataset_sampler(const std::string& name);
Eigen::Index dataset_dim(const std::string& name);

}  // namespace flowlab
