#include "cgp/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>

#include "cgp/errors.hpp"
#include "cgp/likelihoods.hpp"
#include "cgp/parallel.hpp"

namespace cgp {

GaussHermiteRule gh_rule(int order) {
    if (order < 1 || order > 200)
        throw ConfigError("gh_rule order must be in [1, 200], got " + std::to_string(order));
    GaussHermiteRule rule;
    rule.order = order;
    if (order == 1) {
        rule.nodes = Eigen::VectorXd::Zero(1);
        rule.weights = Eigen::VectorXd::Ones(1);
        return rule;
    }
    // Jacobi matrix of the probabilists' Hermite recurrence: zero diagonal,
    // off-diagonal sqrt(k). Eigenvalues give the nodes.
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        double b = std::sqrt(static_cast<double>(k));
        J(k, k - 1) = b;
        J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("gh_rule eigen-decomposition failed");
    Eigen::VectorXd n = eig.eigenvalues();
    std::sort(n.data(), n.data() + order);

    // Orthonormal-recurrence evaluation of p_{h-1} and p_h at x; the tail
    // weights need full relative accuracy, which the raw eigenvector formula
    // does not deliver, so polish each node by Newton (p'_h = sqrt(h) p_{h-1})
    // and take w = 1 / (h * p_{h-1}(x)^2).
    auto eval_pair = [order](double x) {
        double pm = 0.0, pc = 1.0;  // p_{-1}, p_0
        for (int k = 0; k < order; ++k) {
            const double pn =
                (x * pc - std::sqrt(static_cast<double>(k)) * pm) / std::sqrt(k + 1.0);
            pm = pc;
            pc = pn;
        }
        return std::pair<double, double>{pc, pm};  // p_h, p_{h-1}
    };
    Eigen::VectorXd w(order);
    for (int i = 0; i < order; ++i) {
        double x = n(i);
        for (int it = 0; it < 3; ++it) {
            const auto [ph, phm1] = eval_pair(x);
            const double deriv = std::sqrt(static_cast<double>(order)) * phm1;
            if (deriv == 0.0) break;
            x -= ph / deriv;
        }
        n(i) = x;
        const auto [ph, phm1] = eval_pair(x);
        w(i) = 1.0 / (static_cast<double>(order) * phm1 * phm1);
    }
    for (int i = 0; i < order / 2; ++i) {
        int r = order - 1 - i;
        double x = 0.5 * (n(r) - n(i));
        n(i) = -x;
        n(r) = x;
        double ww = 0.5 * (w(i) + w(r));
        w(i) = ww;
        w(r) = ww;
    }
    if (order % 2 == 1) n(order / 2) = 0.0;
    w /= w.sum();
    rule.nodes = n;
    rule.weights = w;
    return rule;
}

std::vector<BiasPosition> default_bias_positions() {
    // y relative to the location latent: at the mode, one scale out
    // (shoulder), and far into the tail. Unit-ish marginal variances.
    return {
        {"mode", 0.0, 0.0, 0.5, 0.0, 0.3},
        {"shoulder", 2.0, 0.0, 0.5, 0.0, 0.3},
        {"tail", 8.0, 0.0, 0.5, 0.0, 0.3},
    };
}

std::vector<BiasRow> bias_study(const std::vector<BiasPosition>& positions,
                                const std::vector<int>& h_list, const std::vector<long>& s_list,
                                int mc_reruns, std::uint64_t seed, double nu) {
    Likelihood lik = Likelihood::het_student_t(nu);
    auto integrand = [&lik](double y) {
        return [&lik, y](double f, double g) { return log_density(lik, y, 0, f, g); };
    };
    const GaussHermiteRule ref = gh_rule(100);

    std::vector<BiasRow> rows;
    std::uint64_t call = 0;
    for (const auto& pos : positions) {
        auto phi = integrand(pos.y);
        const double truth =
            expect_2d(ref, ref, pos.m_f, pos.v_f, pos.m_g, pos.v_g, phi);
        for (int h : h_list) {
            const GaussHermiteRule rule = gh_rule(h);
            double est = expect_2d(rule, rule, pos.m_f, pos.v_f, pos.m_g, pos.v_g, phi);
            rows.push_back({pos.label, "gh", h, std::abs(est - truth)});
        }
        for (long s : s_list) {
            std::vector<double> errs(static_cast<std::size_t>(mc_reruns));
            const std::uint64_t base = call++;
            parallel_for(mc_reruns, [&](std::ptrdiff_t r) {
                McRule mc{s, Rng::derive(seed, base * 1000003ULL + static_cast<std::uint64_t>(r))};
                errs[static_cast<std::size_t>(r)] = std::abs(
                    mc_expect_2d(mc, pos.m_f, pos.v_f, pos.m_g, pos.v_g, phi).estimate - truth);
            });
            std::sort(errs.begin(), errs.end());
            double median = mc_reruns % 2 == 1
                                ? errs[static_cast<std::size_t>(mc_reruns / 2)]
                                : 0.5 * (errs[static_cast<std::size_t>(mc_reruns / 2 - 1)] +
                                         errs[static_cast<std::size_t>(mc_reruns / 2)]);
            rows.push_back({pos.label, "mc", s, median});
        }
    }
    return rows;
}

}  // namespace cgp
