#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "cgp/quadrature.hpp"

namespace cgp {

// How each latent function maps to the likelihood parameter it drives.
enum class Transformation { Identity, Exp };

enum class LikelihoodFamily {
    HetGaussian,           // y ~ N(f, e^g)
    HetStudentT,           // y ~ St(f, e^g, nu)
    Beta,                  // y ~ Beta(e^f, e^g)
    LogLogisticSurvival,   // y ~ LL(e^f, e^g), censoring via delta
    AdditivePoisson,       // y ~ Poisson(e^f + e^g)
    MultiplicativePoisson  // y ~ Poisson(e^{f+g})
};

// Factorized observation model over two transformed latent values. All
// shipped families have arity 2; nu is the Student-t tail weight, a global
// point-optimized parameter rather than a chained one.
struct Likelihood {
    LikelihoodFamily family = LikelihoodFamily::HetGaussian;
    double nu = 4.0;
    bool nu_trainable = true;

    static constexpr int arity = 2;

    static Likelihood het_gaussian();
    static Likelihood het_student_t(double nu = 4.0, bool nu_trainable = true);
    static Likelihood beta();
    static Likelihood log_logistic_survival();
    static Likelihood additive_poisson();
    static Likelihood multiplicative_poisson();

    static Likelihood from_name(const std::string& name);
    std::string name() const;

    std::array<Transformation, 2> transformations() const;
    bool uses_censoring() const;
    // number of global trainable scalars (1 for trainable-nu Student-t)
    int global_count() const;

    // family data-domain predicate; message describes the violated rule
    bool valid_datum(double y, std::string* why = nullptr) const;
};

// Beta log-density clamps y into [eps, 1-eps] rather than failing at the
// boundary; the counter makes the clamps observable.
inline constexpr double kBetaClampEps = 1e-9;
std::uint64_t beta_clamp_count();
void reset_beta_clamp_count();

// log p(y | theta1 = T1(f), theta2 = T2(g)); censored != 0 selects the
// survival-function branch of the survival family.
double log_density(const Likelihood& lik, double y, int censored, double f, double g);

struct DensityGrads {
    double value = 0.0;
    double df = 0.0, dg = 0.0;    // first latent partials
    double d2f = 0.0, d2g = 0.0;  // second latent partials
};

DensityGrads log_density_grads(const Likelihood& lik, double y, int censored, double f, double g);

// d log p / d nu at fixed latents (Student-t only; 0 elsewhere)
double log_density_dnu(const Likelihood& lik, double y, int censored, double f, double g);

struct VariationalExpectation {
    double value = 0.0;
    double d_mf = 0.0, d_vf = 0.0;
    double d_mg = 0.0, d_vg = 0.0;
    double d_nu = 0.0;  // populated for trainable-nu families
};

// E_{q(f)q(g)}[log p] with gradients via the Gaussian derivative identities:
// d/dm = E[d/dx log p], d/dv = E[d2/dx2 log p] / 2. The heteroscedastic
// Gaussian takes its closed form; everything else runs the 2-d rule.
VariationalExpectation variational_expectation(const Likelihood& lik, double y, int censored,
                                               double m_f, double v_f, double m_g, double v_g,
                                               const GaussHermiteRule& rule);

// log E_{q(f)q(g)}[p(y|f,g)]: expectation of the density itself, evaluated in
// log space with a max shift.
double predictive_log_density(const Likelihood& lik, double y, int censored, double m_f,
                              double v_f, double m_g, double v_g, const GaussHermiteRule& rule);

struct PredictiveMoments {
    std::optional<double> mean;
    std::optional<double> variance;  // absent where the family moment is undefined
};

PredictiveMoments predictive_moments(const Likelihood& lik, double m_f, double v_f, double m_g,
                                     double v_g, const GaussHermiteRule& rule);

// P(y* <= t | f, g) for the conditional observation model
double conditional_cdf(const Likelihood& lik, double t, double f, double g);

// E_q[conditional_cdf], and its p-quantile by bisection (integer search for
// the count families).
double predictive_cdf(const Likelihood& lik, double t, double m_f, double v_f, double m_g,
                      double v_g, const GaussHermiteRule& rule);
double predictive_quantile(const Likelihood& lik, double p, double m_f, double v_f, double m_g,
                           double v_g, const GaussHermiteRule& rule);

}  // namespace cgp
