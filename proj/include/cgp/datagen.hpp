#pragma once

#include <cstdint>
#include <functional>

#include "cgp/dataset.hpp"

namespace cgp {

// Corrupts exactly 25 distinct targets of a 1-D regression set with
// N(0, 3) noise (variance 3) after standardizing y; the touched indices land
// in the metadata. standardize=false applies the noise on the raw scale.
Dataset gen_corrupt_motorcycle(const Dataset& base, std::uint64_t seed, bool standardize = true);

// Documented stand-in for the benchmark motorcycle data when no CSV is
// supplied: n=133 on [0,1], an impulse-like mean with input-dependent noise.
Dataset motorcycle_standin(std::uint64_t seed);

// Survival times from a log-logistic with the synthetic alpha/beta surfaces
// over Uniform(0,1)^2 covariates; censor_frac of the individuals get delta=1
// and an observed time drawn uniformly on (0, t_true). Truth columns:
// log_alpha, log_beta.
Dataset gen_survival_synthetic(int n = 1000, double censor_frac = 0.2, std::uint64_t seed = 0);

// the alpha/beta surfaces behind the generator, exposed for tests
double survival_alpha(double x0, double x1);
double survival_beta(double x0, double x1);

// y ~ Poisson(exp(f) + exp(g)) on a 1-D grid; truth columns f, g. Latents are
// clamped at 20 before exponentiation.
Dataset gen_additive_poisson(int n, const std::function<double(double)>& f_truth,
                             const std::function<double(double)>& g_truth, std::uint64_t seed);

// default truth pair: one slow and one fast GP-prior draw (RBF lengthscales
// 0.3 and 0.05, unit variance), fixed by the seed; n defaults to 350
Dataset gen_additive_poisson_default(int n = 350, std::uint64_t seed = 0,
                                     double slow_lengthscale = 0.3,
                                     double fast_lengthscale = 0.05);

// y ~ Beta(alpha(x), beta(x)) on a uniform grid over [0,1]; truth columns
// log_alpha, log_beta; samples nudged off the {0,1} boundary
Dataset gen_beta_synthetic(int n, const std::function<double(double)>& alpha_truth,
                           const std::function<double(double)>& beta_truth, std::uint64_t seed);
Dataset gen_beta_synthetic_default(int n = 500, std::uint64_t seed = 0);

}  // namespace cgp
