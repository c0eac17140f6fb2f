#include "cgp/datagen.hpp"

#include <cmath>

#include "cgp/errors.hpp"
#include "cgp/kernels.hpp"
#include "cgp/rng.hpp"

namespace cgp {

namespace {

Eigen::VectorXd standardized(const Eigen::VectorXd& y) {
    const double mu = y.mean();
    double sd = std::sqrt((y.array() - mu).square().sum() / std::max<double>(1.0, y.size() - 1));
    if (sd <= 0.0) sd = 1.0;
    return (y.array() - mu) / sd;
}

// one GP-prior draw on grid points via the jittered Cholesky
Eigen::VectorXd gp_prior_sample(const Eigen::MatrixXd& X, const KernelSpec& kernel, Rng& rng) {
    const Eigen::MatrixXd K = gram(kernel, X, X);
    const auto llt = cholesky_with_jitter(K);
    Eigen::VectorXd eps(X.rows());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
    return Eigen::MatrixXd(llt.matrixL()) * eps;
}

}  // namespace

Dataset gen_corrupt_motorcycle(const Dataset& base, std::uint64_t seed, bool standardize) {
    base.validate_shapes();
    constexpr int kCorrupted = 25;
    if (base.n() < kCorrupted)
        throw DataError("corrupt_motorcycle needs at least 25 rows, got " +
                        std::to_string(base.n()));
    Dataset out = base;
    out.name = base.name.empty() ? "motor_corrupt" : base.name + "_corrupt";
    out.seed = seed;
    if (standardize) out.y = standardized(base.y);

    Rng rng(Rng::derive(seed, 0xC0));
    std::vector<int> idx(static_cast<std::size_t>(base.n()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    idx.resize(kCorrupted);

    const double sd = std::sqrt(3.0);  // N(0, 3): variance 3
    out.corrupted.clear();
    for (int i : idx) {
        out.y(i) += sd * rng.normal();
        out.corrupted.push_back(i);
    }
    std::sort(out.corrupted.begin(), out.corrupted.end());
    return out;
}

Dataset motorcycle_standin(std::uint64_t seed) {
    // impulse-response shape: quiet lead-in, deep dip, overshoot, ring-down,
    // with noise that grows sharply after the impulse
    const int n = 133;
    Dataset d;
    d.name = "motorcycle_standin";
    d.seed = seed;
    d.X.resize(n, 1);
    d.y.resize(n);
    Rng rng(Rng::derive(seed, 0xA10));
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / (n - 1);
        d.X(i, 0) = t;
        const double mean = -1.3 * std::exp(-std::pow(t - 0.5, 2) / 0.009) +
                            0.9 * std::exp(-std::pow(t - 0.66, 2) / 0.014) -
                            0.3 * std::exp(-std::pow(t - 0.8, 2) / 0.02);
        const double sd = 0.06 + 0.40 / (1.0 + std::exp(-(t - 0.46) / 0.04));
        d.y(i) = mean + sd * rng.normal();
    }
    return d;
}

double survival_alpha(double x0, double x1) {
    return std::exp(2.0 * std::exp(-30.0 * (x0 - 0.25) * (x0 - 0.25)) +
                    std::sin(M_PI * x1 * x1) - 2.0);
}

double survival_beta(double x0, double x1) {
    return std::exp(std::sin(2.0 * M_PI * x0) + std::cos(2.0 * M_PI * x1));
}

Dataset gen_survival_synthetic(int n, double censor_frac, std::uint64_t seed) {
    if (n < 1) throw ConfigError("survival generator needs n >= 1");
    if (!(censor_frac >= 0.0 && censor_frac < 1.0))
        throw ConfigError("censor fraction must lie in [0, 1)");
    Dataset d;
    d.name = "survival_synthetic";
    d.seed = seed;
    d.X.resize(n, 2);
    d.y.resize(n);
    d.censored = Eigen::VectorXi::Zero(n);
    d.truth = Dataset::Truth{{"log_alpha", "log_beta"}, Eigen::MatrixXd(n, 2)};

    Rng rng(Rng::derive(seed, 0x5u));
    for (int i = 0; i < n; ++i) {
        const double x0 = rng.uniform();
        const double x1 = rng.uniform();
        d.X(i, 0) = x0;
        d.X(i, 1) = x1;
        const double alpha = survival_alpha(x0, x1);
        const double beta = survival_beta(x0, x1);
        d.truth->values(i, 0) = std::log(alpha);
        d.truth->values(i, 1) = std::log(beta);
        // inverse-CDF draw: t = alpha (u/(1-u))^{1/beta}
        const double u = rng.uniform();
        double t = alpha * std::pow(u / (1.0 - u), 1.0 / beta);
        d.y(i) = t;
    }
    // censor a censor_frac fraction: observed time uniform on (0, t_true)
    const int n_cens = static_cast<int>(std::floor(censor_frac * n));
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    for (int k = 0; k < n_cens; ++k) {
        const int i = idx[static_cast<std::size_t>(k)];
        (*d.censored)(i) = 1;
        d.y(i) = d.y(i) * rng.uniform();
    }
    return d;
}

Dataset gen_additive_poisson(int n, const std::function<double(double)>& f_truth,
                             const std::function<double(double)>& g_truth, std::uint64_t seed) {
    if (n < 1) throw ConfigError("poisson generator needs n >= 1");
    Dataset d;
    d.name = "additive_poisson_synthetic";
    d.seed = seed;
    d.X.resize(n, 1);
    d.y.resize(n);
    d.truth = Dataset::Truth{{"f", "g"}, Eigen::MatrixXd(n, 2)};
    Rng rng(Rng::derive(seed, 0xA11));
    for (int i = 0; i < n; ++i) {
        const double x = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
        d.X(i, 0) = x;
        const double f = std::min(20.0, f_truth(x));  // overflow guard
        const double g = std::min(20.0, g_truth(x));
        d.truth->values(i, 0) = f;
        d.truth->values(i, 1) = g;
        d.y(i) = static_cast<double>(rng.poisson(std::exp(f) + std::exp(g)));
    }
    return d;
}

Dataset gen_additive_poisson_default(int n, std::uint64_t seed, double slow_lengthscale,
                                     double fast_lengthscale) {
    // draw the truth pair once from RBF GP priors on the same grid
    Eigen::MatrixXd X(n, 1);
    for (int i = 0; i < n; ++i) X(i, 0) = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    Rng rng(Rng::derive(seed, 0xA12));
    Eigen::VectorXd ls_slow(1), ls_fast(1);
    ls_slow << slow_lengthscale;
    ls_fast << fast_lengthscale;
    const Eigen::VectorXd f = gp_prior_sample(X, KernelSpec::ard_rbf(1.0, ls_slow), rng);
    const Eigen::VectorXd g = gp_prior_sample(X, KernelSpec::ard_rbf(1.0, ls_fast), rng);

    auto interp = [n](const Eigen::VectorXd& v) {
        return [v, n](double x) {
            const double pos = x * (n - 1);
            const int lo = std::clamp(static_cast<int>(std::floor(pos)), 0, n - 1);
            const int hi = std::min(lo + 1, n - 1);
            const double w = pos - lo;
            return (1.0 - w) * v(lo) + w * v(hi);
        };
    };
    return gen_additive_poisson(n, interp(f), interp(g), seed);
}

Dataset gen_beta_synthetic(int n, const std::function<double(double)>& alpha_truth,
                           const std::function<double(double)>& beta_truth, std::uint64_t seed) {
    if (n < 1) throw ConfigError("beta generator needs n >= 1");
    Dataset d;
    d.name = "beta_synthetic";
    d.seed = seed;
    d.X.resize(n, 1);
    d.y.resize(n);
    d.truth = Dataset::Truth{{"log_alpha", "log_beta"}, Eigen::MatrixXd(n, 2)};
    Rng rng(Rng::derive(seed, 0xBE7A));
    for (int i = 0; i < n; ++i) {
        const double x = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
        d.X(i, 0) = x;
        const double a = alpha_truth(x);
        const double b = beta_truth(x);
        if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("beta truth functions must be positive");
        d.truth->values(i, 0) = std::log(a);
        d.truth->values(i, 1) = std::log(b);
        const double y = rng.beta(a, b);
        d.y(i) = std::clamp(y, kBetaClampEps, 1.0 - kBetaClampEps);
    }
    return d;
}

Dataset gen_beta_synthetic_default(int n, std::uint64_t seed) {
    // shape drifting from right-skew through symmetric to bathtub
    auto alpha = [](double x) { return std::exp(std::sin(2.0 * M_PI * x)); };
    auto beta = [](double x) { return std::exp(std::cos(2.0 * M_PI * x)); };
    return gen_beta_synthetic(n, alpha, beta, seed);
}

}  // namespace cgp
