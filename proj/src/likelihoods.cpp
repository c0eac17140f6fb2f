#include "cgp/likelihoods.hpp"

#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <limits>

#include "cgp/errors.hpp"

namespace cgp {

namespace {

std::atomic<std::uint64_t> g_beta_clamps{0};

double softplus(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double logistic(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

constexpr double kHalfLog2Pi = 0.9189385332046727417803297364056;  // log(2*pi)/2

// ---- per-family conditional ops -------------------------------------------
// Each family exposes the log-density and its latent partials at one (f, g);
// the quadrature paths below are generic over these.

struct HetGaussianOps {
    double y;
    DensityGrads eval(double f, double g) const {
        DensityGrads d;
        const double r = y - f;
        const double s = std::exp(-g);
        d.value = -kHalfLog2Pi - 0.5 * g - 0.5 * r * r * s;
        d.df = r * s;
        d.d2f = -s;
        d.dg = -0.5 + 0.5 * r * r * s;
        d.d2g = -0.5 * r * r * s;
        return d;
    }
};

struct HetStudentTOps {
    double y, nu;
    double lconst;  // lgamma((nu+1)/2) - lgamma(nu/2) - log(nu*pi)/2
    HetStudentTOps(double y, double nu)
        : y(y),
          nu(nu),
          lconst(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                 0.5 * std::log(nu * M_PI)) {}
    DensityGrads eval(double f, double g) const {
        DensityGrads d;
        const double r = y - f;
        const double s = std::exp(-g);
        const double t = r * r * s / nu;  // so A = 1 + t
        const double A = 1.0 + t;
        d.value = lconst - 0.5 * g - 0.5 * (nu + 1.0) * std::log1p(t);
        d.df = (nu + 1.0) / nu * r * s / A;
        d.d2f = (nu + 1.0) / nu * s * (2.0 * t - A) / (A * A);
        d.dg = -0.5 + 0.5 * (nu + 1.0) * t / A;
        d.d2g = -0.5 * (nu + 1.0) * t / (A * A);
        return d;
    }
    double dnu(double f, double g) const {
        const double r = y - f;
        const double s = std::exp(-g);
        const double t = r * r * s / nu;
        const double A = 1.0 + t;
        return 0.5 * boost::math::digamma(0.5 * (nu + 1.0)) -
               0.5 * boost::math::digamma(0.5 * nu) - 0.5 / nu - 0.5 * std::log1p(t) +
               0.5 * (nu + 1.0) * t / (nu * A);
    }
};

struct BetaOps {
    double ly, l1y;  // log y, log(1-y) after the boundary clamp
    explicit BetaOps(double y) {
        if (y < kBetaClampEps) {
            y = kBetaClampEps;
            g_beta_clamps.fetch_add(1, std::memory_order_relaxed);
        } else if (y > 1.0 - kBetaClampEps) {
            y = 1.0 - kBetaClampEps;
            g_beta_clamps.fetch_add(1, std::memory_order_relaxed);
        }
        ly = std::log(y);
        l1y = std::log1p(-y);
    }
    DensityGrads eval(double f, double g) const {
        DensityGrads d;
        const double a = std::exp(f);
        const double b = std::exp(g);
        const double dab = boost::math::digamma(a + b);
        d.value = (a - 1.0) * ly + (b - 1.0) * l1y + std::lgamma(a + b) - std::lgamma(a) -
                  std::lgamma(b);
        const double cf = ly + dab - boost::math::digamma(a);
        const double cg = l1y + dab - boost::math::digamma(b);
        const double tab = boost::math::trigamma(a + b);
        d.df = a * cf;
        d.d2f = a * cf + a * a * (tab - boost::math::trigamma(a));
        d.dg = b * cg;
        d.d2g = b * cg + b * b * (tab - boost::math::trigamma(b));
        return d;
    }
};

struct LogLogisticOps {
    double ly;
    bool censored;
    LogLogisticOps(double y, int censored) : ly(std::log(y)), censored(censored != 0) {}
    DensityGrads eval(double f, double g) const {
        DensityGrads d;
        const double b = std::exp(g);
        const double w = b * (ly - f);
        const double sig = logistic(w);
        if (censored) {
            // log survival: -log(1 + (y/alpha)^beta)
            d.value = -softplus(w);
            d.df = b * sig;
            d.d2f = -b * b * sig * (1.0 - sig);
            d.dg = -w * sig;
            d.d2g = -w * sig - w * w * sig * (1.0 - sig);
        } else {
            d.value = g + w - ly - 2.0 * softplus(w);
            d.df = b * (2.0 * sig - 1.0);
            d.d2f = -2.0 * b * b * sig * (1.0 - sig);
            d.dg = 1.0 + w * (1.0 - 2.0 * sig);
            d.d2g = w * (1.0 - 2.0 * sig) - 2.0 * w * w * sig * (1.0 - sig);
        }
        return d;
    }
};

struct AdditivePoissonOps {
    double y, lgy1;
    explicit AdditivePoissonOps(double y) : y(y), lgy1(std::lgamma(y + 1.0)) {}
    DensityGrads eval(double f, double g) const {
        DensityGrads d;
        const double ef = std::exp(f);
        const double eg = std::exp(g);
        const double lam = ef + eg;
        d.value = y * std::log(lam) - lam - lgy1;
        d.df = (y / lam - 1.0) * ef;
        d.d2f = d.df - y * ef * ef / (lam * lam);
        d.dg = (y / lam - 1.0) * eg;
        d.d2g = d.dg - y * eg * eg / (lam * lam);
        return d;
    }
};

struct MultiplicativePoissonOps {
    double y, lgy1;
    explicit MultiplicativePoissonOps(double y) : y(y), lgy1(std::lgamma(y + 1.0)) {}
    DensityGrads eval(double f, double g) const {
        DensityGrads d;
        const double lam = std::exp(f + g);
        d.value = y * (f + g) - lam - lgy1;
        d.df = y - lam;
        d.d2f = -lam;
        d.dg = d.df;
        d.d2g = d.d2f;
        return d;
    }
};

template <class Fn>
decltype(auto) with_ops(const Likelihood& lik, double y, int censored, Fn&& fn) {
    switch (lik.family) {
        case LikelihoodFamily::HetGaussian: return fn(HetGaussianOps{y});
        case LikelihoodFamily::HetStudentT: return fn(HetStudentTOps{y, lik.nu});
        case LikelihoodFamily::Beta: return fn(BetaOps{y});
        case LikelihoodFamily::LogLogisticSurvival: return fn(LogLogisticOps{y, censored});
        case LikelihoodFamily::AdditivePoisson: return fn(AdditivePoissonOps{y});
        case LikelihoodFamily::MultiplicativePoisson:
            return fn(MultiplicativePoissonOps{y});
    }
    throw ConfigError("unknown likelihood family");
}

void check_domain(const Likelihood& lik, double y, int censored) {
    std::string why;
    if (!lik.valid_datum(y, &why)) throw DataError(why);
    if (censored != 0 && !lik.uses_censoring())
        throw DataError("censoring indicator given for a non-survival likelihood");
}

// Shared quadrature body for the value and its (m, v) partials. The mean
// gradients use d/dm E[phi] = E[phi']. For the variance gradients both
//   (a) E[phi'']/2                 and
//   (b) E[phi' (x - m)] / (2 v)    (Stein form)
// estimate the same derivative; (b) applied node-wise is in addition the
// exact derivative of the discrete sum, so finite differences of the
// computed value reproduce it to machine precision. (a) is kept for the
// degenerate v where (b) loses accuracy to cancellation.
template <class Ops>
VariationalExpectation varexp_by_quadrature(const Ops& ops, double m_f, double v_f, double m_g,
                                            double v_g, const GaussHermiteRule& rule) {
    VariationalExpectation out;
    const double sf = std::sqrt(v_f), sg = std::sqrt(v_g);
    const bool stein_f = v_f > 1e-12, stein_g = v_g > 1e-12;
    for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
        const double xf = rule.nodes(i);
        const double f = m_f + sf * xf;
        const double wf = rule.weights(i);
        for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
            const double xg = rule.nodes(j);
            const double g = m_g + sg * xg;
            const double w = wf * rule.weights(j);
            DensityGrads d = ops.eval(f, g);
            out.value += w * d.value;
            out.d_mf += w * d.df;
            out.d_mg += w * d.dg;
            out.d_vf += stein_f ? w * d.df * xf / (2.0 * sf) : 0.5 * w * d.d2f;
            out.d_vg += stein_g ? w * d.dg * xg / (2.0 * sg) : 0.5 * w * d.d2g;
        }
    }
    return out;
}

}  // namespace

Likelihood Likelihood::het_gaussian() { return {LikelihoodFamily::HetGaussian, 4.0, false}; }
Likelihood Likelihood::het_student_t(double nu, bool nu_trainable) {
    if (!(nu > 0.0)) throw ConfigError("student-t nu must be positive");
    return {LikelihoodFamily::HetStudentT, nu, nu_trainable};
}
Likelihood Likelihood::beta() { return {LikelihoodFamily::Beta, 4.0, false}; }
Likelihood Likelihood::log_logistic_survival() {
    return {LikelihoodFamily::LogLogisticSurvival, 4.0, false};
}
Likelihood Likelihood::additive_poisson() { return {LikelihoodFamily::AdditivePoisson, 4.0, false}; }
Likelihood Likelihood::multiplicative_poisson() {
    return {LikelihoodFamily::MultiplicativePoisson, 4.0, false};
}

Likelihood Likelihood::from_name(const std::string& name) {
    if (name == "het_gaussian") return het_gaussian();
    if (name == "het_student_t") return het_student_t();
    if (name == "beta") return beta();
    if (name == "log_logistic_survival") return log_logistic_survival();
    if (name == "additive_poisson") return additive_poisson();
    if (name == "multiplicative_poisson") return multiplicative_poisson();
    throw ConfigError("unknown likelihood family: " + name);
}

std::string Likelihood::name() const {
    switch (family) {
        case LikelihoodFamily::HetGaussian: return "het_gaussian";
        case LikelihoodFamily::HetStudentT: return "het_student_t";
        case LikelihoodFamily::Beta: return "beta";
        case LikelihoodFamily::LogLogisticSurvival: return "log_logistic_survival";
        case LikelihoodFamily::AdditivePoisson: return "additive_poisson";
        case LikelihoodFamily::MultiplicativePoisson: return "multiplicative_poisson";
    }
    return "?";
}

std::array<Transformation, 2> Likelihood::transformations() const {
    switch (family) {
        case LikelihoodFamily::HetGaussian:
        case LikelihoodFamily::HetStudentT:
            return {Transformation::Identity, Transformation::Exp};
        default:
            return {Transformation::Exp, Transformation::Exp};
    }
}

bool Likelihood::uses_censoring() const {
    return family == LikelihoodFamily::LogLogisticSurvival;
}

int Likelihood::global_count() const {
    return family == LikelihoodFamily::HetStudentT && nu_trainable ? 1 : 0;
}

bool Likelihood::valid_datum(double y, std::string* why) const {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (!std::isfinite(y)) return fail("target is not finite");
    switch (family) {
        case LikelihoodFamily::HetGaussian:
        case LikelihoodFamily::HetStudentT:
            return true;
        case LikelihoodFamily::Beta:
            if (y <= 0.0 || y >= 1.0) return fail("beta targets must lie strictly inside (0,1)");
            return true;
        case LikelihoodFamily::LogLogisticSurvival:
            if (y <= 0.0) return fail("survival times must be positive");
            return true;
        case LikelihoodFamily::AdditivePoisson:
        case LikelihoodFamily::MultiplicativePoisson:
            if (y < 0.0 || std::floor(y) != y) return fail("count targets must be nonnegative integers");
            return true;
    }
    return fail("unknown likelihood family");
}

std::uint64_t beta_clamp_count() { return g_beta_clamps.load(std::memory_order_relaxed); }
void reset_beta_clamp_count() { g_beta_clamps.store(0, std::memory_order_relaxed); }

double log_density(const Likelihood& lik, double y, int censored, double f, double g) {
    check_domain(lik, y, censored);
    return with_ops(lik, y, censored, [&](const auto& ops) { return ops.eval(f, g).value; });
}

DensityGrads log_density_grads(const Likelihood& lik, double y, int censored, double f, double g) {
    check_domain(lik, y, censored);
    return with_ops(lik, y, censored, [&](const auto& ops) { return ops.eval(f, g); });
}

double log_density_dnu(const Likelihood& lik, double y, int censored, double f, double g) {
    if (lik.family != LikelihoodFamily::HetStudentT) return 0.0;
    check_domain(lik, y, censored);
    return HetStudentTOps{y, lik.nu}.dnu(f, g);
}

VariationalExpectation variational_expectation(const Likelihood& lik, double y, int censored,
                                               double m_f, double v_f, double m_g, double v_g,
                                               const GaussHermiteRule& rule) {
    check_domain(lik, y, censored);
    if (v_f < 0.0 || v_g < 0.0) throw NumericalError("negative marginal variance");

    if (lik.family == LikelihoodFamily::HetGaussian) {
        // closed form: log N(y | mf, e^{mg - vg/2}) - vg/4 - vf e^{-mg + vg/2}/2
        VariationalExpectation out;
        const double r = y - m_f;
        const double e1 = std::exp(-m_g + 0.5 * v_g);
        out.value = -kHalfLog2Pi - 0.5 * m_g - 0.5 * (r * r + v_f) * e1;
        out.d_mf = r * e1;
        out.d_vf = -0.5 * e1;
        out.d_mg = 0.5 * (r * r + v_f) * e1 - 0.5;
        out.d_vg = -0.25 * (r * r + v_f) * e1;
        return out;
    }

    VariationalExpectation out = with_ops(lik, y, censored, [&](const auto& ops) {
        return varexp_by_quadrature(ops, m_f, v_f, m_g, v_g, rule);
    });
    if (lik.family == LikelihoodFamily::HetStudentT && lik.nu_trainable) {
        HetStudentTOps ops{y, lik.nu};
        out.d_nu = expect_2d(rule, rule, m_f, v_f, m_g, v_g,
                             [&](double f, double g) { return ops.dnu(f, g); });
    }
    return out;
}

double predictive_log_density(const Likelihood& lik, double y, int censored, double m_f,
                              double v_f, double m_g, double v_g, const GaussHermiteRule& rule) {
    check_domain(lik, y, censored);
    if (v_f < 0.0 || v_g < 0.0) throw NumericalError("negative marginal variance");
    return with_ops(lik, y, censored, [&](const auto& ops) {
        const double sf = std::sqrt(v_f), sg = std::sqrt(v_g);
        const Eigen::Index h = rule.nodes.size();
        Eigen::MatrixXd lp(h, h);
        double shift = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < h; ++i) {
            const double f = m_f + sf * rule.nodes(i);
            for (Eigen::Index j = 0; j < h; ++j) {
                lp(i, j) = ops.eval(f, m_g + sg * rule.nodes(j)).value;
                shift = std::max(shift, lp(i, j));
            }
        }
        if (!std::isfinite(shift)) return shift;  // all-zero density mass
        double acc = 0.0;
        for (Eigen::Index i = 0; i < h; ++i)
            for (Eigen::Index j = 0; j < h; ++j)
                acc += rule.weights(i) * rule.weights(j) * std::exp(lp(i, j) - shift);
        return shift + std::log(acc);
    });
}

namespace {

struct ConditionalMoments {
    double mean = 0.0;
    double e2 = 0.0;  // second raw moment
    bool mean_defined = true;
    bool var_defined = true;
};

ConditionalMoments conditional_moments(const Likelihood& lik, double f, double g) {
    ConditionalMoments m;
    switch (lik.family) {
        case LikelihoodFamily::HetGaussian: {
            const double var = std::exp(g);
            m.mean = f;
            m.e2 = var + f * f;
            break;
        }
        case LikelihoodFamily::HetStudentT: {
            m.mean = f;
            m.mean_defined = lik.nu > 1.0;
            if (lik.nu > 2.0) {
                const double var = std::exp(g) * lik.nu / (lik.nu - 2.0);
                m.e2 = var + f * f;
            } else {
                m.var_defined = false;
            }
            break;
        }
        case LikelihoodFamily::Beta: {
            const double a = std::exp(f), b = std::exp(g);
            m.mean = a / (a + b);
            const double var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
            m.e2 = var + m.mean * m.mean;
            break;
        }
        case LikelihoodFamily::LogLogisticSurvival: {
            const double alpha = std::exp(f), beta = std::exp(g);
            if (beta > 1.0) {
                const double c = M_PI / beta;
                m.mean = alpha * c / std::sin(c);
            } else {
                m.mean_defined = false;
            }
            if (beta > 2.0) {
                const double c = M_PI / beta;
                m.e2 = alpha * alpha * 2.0 * c / std::sin(2.0 * c);
            } else {
                m.var_defined = false;
            }
            break;
        }
        case LikelihoodFamily::AdditivePoisson: {
            const double lam = std::exp(f) + std::exp(g);
            m.mean = lam;
            m.e2 = lam + lam * lam;
            break;
        }
        case LikelihoodFamily::MultiplicativePoisson: {
            const double lam = std::exp(f + g);
            m.mean = lam;
            m.e2 = lam + lam * lam;
            break;
        }
    }
    return m;
}

}  // namespace

PredictiveMoments predictive_moments(const Likelihood& lik, double m_f, double v_f, double m_g,
                                     double v_g, const GaussHermiteRule& rule) {
    const double sf = std::sqrt(v_f), sg = std::sqrt(v_g);
    double mean = 0.0, e2 = 0.0;
    bool mean_ok = true, var_ok = true;
    for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
        const double f = m_f + sf * rule.nodes(i);
        for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
            const double w = rule.weights(i) * rule.weights(j);
            ConditionalMoments cm = conditional_moments(lik, f, m_g + sg * rule.nodes(j));
            mean_ok = mean_ok && cm.mean_defined;
            var_ok = var_ok && cm.var_defined;
            mean += w * cm.mean;
            e2 += w * cm.e2;
        }
    }
    PredictiveMoments out;
    if (mean_ok) out.mean = mean;
    if (mean_ok && var_ok) out.variance = std::max(0.0, e2 - mean * mean);
    return out;
}

double conditional_cdf(const Likelihood& lik, double t, double f, double g) {
    switch (lik.family) {
        case LikelihoodFamily::HetGaussian:
            return normal_cdf((t - f) * std::exp(-0.5 * g));
        case LikelihoodFamily::HetStudentT: {
            boost::math::students_t dist(lik.nu);
            return boost::math::cdf(dist, (t - f) * std::exp(-0.5 * g));
        }
        case LikelihoodFamily::Beta: {
            if (t <= 0.0) return 0.0;
            if (t >= 1.0) return 1.0;
            return boost::math::ibeta(std::exp(f), std::exp(g), t);
        }
        case LikelihoodFamily::LogLogisticSurvival: {
            if (t <= 0.0) return 0.0;
            return logistic(std::exp(g) * (std::log(t) - f));
        }
        case LikelihoodFamily::AdditivePoisson:
        case LikelihoodFamily::MultiplicativePoisson: {
            if (t < 0.0) return 0.0;
            const double lam = lik.family == LikelihoodFamily::AdditivePoisson
                                   ? std::exp(f) + std::exp(g)
                                   : std::exp(f + g);
            // P(Y <= k) = Q(k+1, lam)
            return boost::math::gamma_q(std::floor(t) + 1.0, lam);
        }
    }
    throw ConfigError("unknown likelihood family");
}

double predictive_cdf(const Likelihood& lik, double t, double m_f, double v_f, double m_g,
                      double v_g, const GaussHermiteRule& rule) {
    return expect_2d(rule, rule, m_f, v_f, m_g, v_g,
                     [&](double f, double g) { return conditional_cdf(lik, t, f, g); });
}

namespace {

enum class Support { RealLine, Positive, UnitInterval, Counts };

Support support_of(LikelihoodFamily fam) {
    switch (fam) {
        case LikelihoodFamily::HetGaussian:
        case LikelihoodFamily::HetStudentT: return Support::RealLine;
        case LikelihoodFamily::Beta: return Support::UnitInterval;
        case LikelihoodFamily::LogLogisticSurvival: return Support::Positive;
        default: return Support::Counts;
    }
}

}  // namespace

double predictive_quantile(const Likelihood& lik, double p, double m_f, double v_f, double m_g,
                           double v_g, const GaussHermiteRule& rule) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("quantile level must lie in (0,1)");
    auto F = [&](double t) { return predictive_cdf(lik, t, m_f, v_f, m_g, v_g, rule); };

    const Support sup = support_of(lik.family);
    if (sup == Support::Counts) {
        long hi = 1;
        while (F(static_cast<double>(hi)) < p && hi < (1L << 40)) hi *= 2;
        long lo = 0;
        while (lo < hi) {  // smallest k with F(k) >= p
            long mid = lo + (hi - lo) / 2;
            if (F(static_cast<double>(mid)) >= p) hi = mid;
            else lo = mid + 1;
        }
        return static_cast<double>(lo);
    }

    double lo, hi;
    switch (sup) {
        case Support::UnitInterval:
            lo = 0.0;
            hi = 1.0;
            break;
        case Support::Positive: {
            double t = std::exp(m_f);  // scale-parameter ballpark
            lo = t;
            hi = t;
            while (F(lo) > p && lo > 1e-300) lo *= 0.5;
            while (F(hi) < p && hi < 1e300) hi *= 2.0;
            break;
        }
        default: {
            double w = std::sqrt(v_f) + std::exp(0.5 * (m_g + v_g)) + 1.0;
            lo = m_f - w;
            hi = m_f + w;
            while (F(lo) > p) { lo -= w; w *= 2.0; }
            w = std::sqrt(v_f) + std::exp(0.5 * (m_g + v_g)) + 1.0;
            while (F(hi) < p) { hi += w; w *= 2.0; }
            break;
        }
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        if (F(mid) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace cgp
