#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cgp/rng.hpp"

namespace cgp {

// Gauss-Hermite rule in the normalized probabilists' convention:
// E_{N(0,1)}[phi] ~= sum_i weights(i) * phi(nodes(i)), weights sum to 1.
struct GaussHermiteRule {
    int order = 0;
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
};

// Nodes/weights from the eigen-decomposition of the symmetric Jacobi matrix;
// exact for polynomials up to degree 2h-1. Valid h: 1..200.
GaussHermiteRule gh_rule(int order);

// E_{N(m,v)}[phi], v >= 0. Non-finite phi values propagate into the result.
template <class F>
double expect_1d(const GaussHermiteRule& rule, double m, double v, F&& phi) {
    const double s = std::sqrt(v);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights(i) * phi(m + s * rule.nodes(i));
    return acc;
}

// E_{N(mf,vf) x N(mg,vg)}[phi(f,g)] by the nested tensor-product rule.
template <class F>
double expect_2d(const GaussHermiteRule& rule_f, const GaussHermiteRule& rule_g, double m_f,
                 double v_f, double m_g, double v_g, F&& phi) {
    const double sf = std::sqrt(v_f), sg = std::sqrt(v_g);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < rule_f.nodes.size(); ++i) {
        const double f = m_f + sf * rule_f.nodes(i);
        double inner = 0.0;
        for (Eigen::Index j = 0; j < rule_g.nodes.size(); ++j)
            inner += rule_g.weights(j) * phi(f, m_g + sg * rule_g.nodes(j));
        acc += rule_f.weights(i) * inner;
    }
    return acc;
}

struct McRule {
    long samples = 1000;
    std::uint64_t seed = 0;
};

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Centered-reparameterization Monte Carlo estimate of the same expectation:
// f = mf + sqrt(vf) e1, g = mg + sqrt(vg) e2, e ~ N(0,1). Deterministic in
// the rule's seed; callers wanting independent calls derive per-call seeds
// via Rng::derive(seed, call_index).
template <class F>
McEstimate mc_expect_2d(const McRule& rule, double m_f, double v_f, double m_g, double v_g,
                        F&& phi) {
    Rng rng(rule.seed);
    const double sf = std::sqrt(v_f), sg = std::sqrt(v_g);
    double sum = 0.0, sumsq = 0.0;
    for (long s = 0; s < rule.samples; ++s) {
        const double x = phi(m_f + sf * rng.normal(), m_g + sg * rng.normal());
        sum += x;
        sumsq += x * x;
    }
    const double n = static_cast<double>(rule.samples);
    McEstimate out;
    out.estimate = sum / n;
    if (rule.samples > 1) {
        double var = (sumsq - n * out.estimate * out.estimate) / (n - 1.0);
        out.std_error = std::sqrt(std::max(0.0, var) / n);
    }
    return out;
}

// One evaluation point of the heteroscedastic Student-t integrand used by the
// quadrature-vs-MC study: E[log St(y | f, e^g, nu)] at the given marginals.
struct BiasPosition {
    std::string label;
    double y = 0.0;
    double m_f = 0.0, v_f = 0.0;
    double m_g = 0.0, v_g = 0.0;
};

struct BiasRow {
    std::string position;
    std::string method;  // "gh" | "mc"
    long order_or_samples = 0;
    double abs_error = 0.0;  // MC rows: median |error| over the reruns
};

// Shipped stand-ins for the mode/shoulder/tail evaluation points; the exact
// values behind the original figure are not published, so these are repo
// defaults, not quoted numbers.
std::vector<BiasPosition> default_bias_positions();

// Absolute error of GH per order and of MC per sample count (median over
// mc_reruns), both against a GH(h=100) reference of the Student-t integrand.
// Emits one row per (position, order-or-samples) pair.
std::vector<BiasRow> bias_study(const std::vector<BiasPosition>& positions,
                                const std::vector<int>& h_list, const std::vector<long>& s_list,
                                int mc_reruns, std::uint64_t seed, double nu = 4.0);

}  // namespace cgp
