#include <doctest.h>

#include <Eigen/Dense>

#include "cgp/errors.hpp"
#include "cgp/rng.hpp"
#include "cgp/svgp.hpp"
#include "oracles.hpp"

using namespace cgp;

namespace {

Eigen::MatrixXd random_inputs(Rng& rng, int n, int q) {
    Eigen::MatrixXd X(n, q);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    return X;
}

Eigen::MatrixXd random_lower(Rng& rng, int m, double diag_scale = 1.0) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < i; ++j) L(i, j) = 0.3 * rng.normal();
        L(i, i) = diag_scale * std::exp(0.3 * rng.normal());
    }
    return L;
}

LatentGP random_latent(Rng& rng, int m, int q) {
    LatentGP gp;
    gp.Z = random_inputs(rng, m, q);
    Eigen::VectorXd ls(q);
    for (int d = 0; d < q; ++d) ls(d) = std::exp(0.4 * rng.normal());
    gp.kernel = KernelSpec::sum(
        {KernelSpec::ard_rbf(std::exp(0.3 * rng.normal()), ls), KernelSpec::bias(0.7)});
    gp.mu_u = Eigen::VectorXd(m);
    for (int i = 0; i < m; ++i) gp.mu_u(i) = rng.normal();
    gp.L_u = random_lower(rng, m);
    gp.prior_mean = 0.5 * rng.normal();
    return gp;
}

Eigen::MatrixXd jittered(const Eigen::MatrixXd& K) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter_for(K);
    return Kj;
}

// set S = Kuu + jitter so q(u) matches the (jittered) prior exactly
void set_to_prior(LatentGP& gp) {
    gp.mu_u.setZero();
    const Eigen::MatrixXd Kj = jittered(gram(gp.kernel, gp.Z, gp.Z));
    gp.L_u = Eigen::LLT<Eigen::MatrixXd>(Kj).matrixL();
}

}  // namespace

TEST_CASE("marginals recover the prior when q(u) is the prior") {
    Rng rng(71);
    LatentGP gp = random_latent(rng, 6, 2);
    set_to_prior(gp);
    const auto X = random_inputs(rng, 15, 2);
    const auto m = marginals(gp, X);
    CHECK((m.mean.array() - gp.prior_mean).abs().maxCoeff() < 1e-10);
    CHECK((m.var - gram_diag(gp.kernel, X)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("marginals interpolate the inducing values at X = Z") {
    // With a concentrated q(u) the marginals at the inducing inputs pin down
    // to the inducing values: mean = mu_u + prior mean, variance ~ 0. A
    // well-separated Z keeps the check away from conditioning noise.
    Rng rng(73);
    LatentGP gp;
    const int m = 8;
    gp.Z.resize(m, 1);
    for (int i = 0; i < m; ++i) gp.Z(i, 0) = static_cast<double>(i);
    Eigen::VectorXd ls(1);
    ls << 0.6;
    gp.kernel = KernelSpec::ard_rbf(1.0, ls);
    gp.mu_u.resize(m);
    for (int i = 0; i < m; ++i) gp.mu_u(i) = 0.5 * rng.normal();
    gp.L_u = 1e-5 * Eigen::MatrixXd::Identity(m, m);  // S ~ 0
    gp.prior_mean = 0.3;
    const auto got = marginals(gp, gp.Z);
    CHECK((got.mean - (gp.mu_u.array() + gp.prior_mean).matrix()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(got.var.maxCoeff() < 1e-5);  // zero up to jitter
    CHECK(got.var.minCoeff() >= 0.0);
}

TEST_CASE("marginals match a dense oracle") {
    Rng rng(79);
    for (int rep = 0; rep < 20; ++rep) {
        LatentGP gp = random_latent(rng, 2, 1);
        const auto X = random_inputs(rng, 1, 1);
        const auto got = marginals(gp, X);

        const Eigen::MatrixXd Kj = jittered(gram(gp.kernel, gp.Z, gp.Z));
        const Eigen::MatrixXd Kinv = Kj.inverse();
        const Eigen::MatrixXd Kfu = gram(gp.kernel, X, gp.Z);
        const Eigen::MatrixXd S = gp.L_u * gp.L_u.transpose();
        const double mean = (Kfu * Kinv * gp.mu_u)(0) + gp.prior_mean;
        const double var = gram_diag(gp.kernel, X)(0) +
                           (Kfu * Kinv * (S - Kj) * Kinv * Kfu.transpose())(0);
        CHECK(std::abs(got.mean(0) - mean) < 1e-10);
        CHECK(std::abs(got.var(0) - var) < 1e-10);
    }
}

TEST_CASE("predict_latent is marginals, bit for bit; empty inputs allowed") {
    Rng rng(83);
    LatentGP gp = random_latent(rng, 5, 3);
    const auto X = random_inputs(rng, 9, 3);
    const auto a = marginals(gp, X);
    const auto b = predict_latent(gp, X);
    CHECK(a.mean == b.mean);
    CHECK(a.var == b.var);

    const Eigen::MatrixXd empty(0, 3);
    const auto e = predict_latent(gp, empty);
    CHECK(e.mean.size() == 0);
    CHECK(e.var.size() == 0);
}

TEST_CASE("kl at the prior is zero and positive off it") {
    Rng rng(89);
    LatentGP gp = random_latent(rng, 7, 2);
    set_to_prior(gp);
    CHECK(std::abs(kl_to_prior(gp)) < 1e-9);

    gp.mu_u(3) += 0.25;
    CHECK(kl_to_prior(gp) > 1e-4);
}

TEST_CASE("kl matches the dense formula on a 2x2 case") {
    Rng rng(97);
    for (int rep = 0; rep < 20; ++rep) {
        LatentGP gp = random_latent(rng, 2, 1);
        const Eigen::MatrixXd Kj = jittered(gram(gp.kernel, gp.Z, gp.Z));
        const Eigen::MatrixXd S = gp.L_u * gp.L_u.transpose();
        const Eigen::MatrixXd Kinv = Kj.inverse();
        const double direct = 0.5 * ((Kinv * S).trace() + gp.mu_u.dot(Kinv * gp.mu_u) - 2.0 +
                                     std::log(Kj.determinant()) - std::log(S.determinant()));
        CHECK(std::abs(kl_to_prior(gp) - direct) < 1e-10);
    }
}

TEST_CASE("kl is invariant under simultaneous orthogonal rotation") {
    Rng rng(101);
    for (int rep = 0; rep < 10; ++rep) {
        const int m = 6;
        Eigen::VectorXd mu(m);
        for (int i = 0; i < m; ++i) mu(i) = rng.normal();
        const Eigen::MatrixXd L = random_lower(rng, m);
        Eigen::MatrixXd A = random_inputs(rng, m, m);
        const Eigen::MatrixXd K = A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(m, m);

        Eigen::MatrixXd G = random_inputs(rng, m, m);
        const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ();

        const Eigen::MatrixXd S = L * L.transpose();
        const Eigen::MatrixXd Srot = Q * S * Q.transpose();
        const Eigen::MatrixXd Lrot = Eigen::LLT<Eigen::MatrixXd>(Srot).matrixL();
        const double a = kl_gaussian(mu, L, K);
        const double b = kl_gaussian(Q * mu, Lrot, Q * K * Q.transpose());
        CHECK(std::abs(a - b) < 1e-8);
    }
}

TEST_CASE("zero adjoints give zero marginal gradients") {
    Rng rng(103);
    LatentGP gp = random_latent(rng, 5, 2);
    const auto X = random_inputs(rng, 12, 2);
    const auto g = marginal_grads(gp, X, Eigen::VectorXd::Zero(12), Eigen::VectorXd::Zero(12));
    CHECK(g.d_mu_u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_L_u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_hypers.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_Z.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.d_prior_mean == 0.0);
}

TEST_CASE("kl gradients vanish at the prior") {
    Rng rng(107);
    LatentGP gp = random_latent(rng, 5, 2);
    set_to_prior(gp);
    const auto g = kl_grads(gp);
    CHECK(g.d_mu_u.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(g.d_L_u.cwiseAbs().maxCoeff() < 1e-8);
    CHECK(g.d_hypers.cwiseAbs().maxCoeff() < 1e-8);
    CHECK(g.d_Z.cwiseAbs().maxCoeff() < 1e-8);
}

namespace {

// scalar objective probing both marginal outputs and the KL
struct GradProbe {
    Eigen::MatrixXd X;
    Eigen::VectorXd w, u;
    double operator()(const LatentGP& gp) const {
        const auto m = marginals(gp, X);
        return w.dot(m.mean) + u.dot(m.var) + kl_to_prior(gp);
    }
};

}  // namespace

TEST_CASE("marginal and kl gradients match finite differences on every block") {
    Rng rng(109);
    const int n = 10, m = 3, q = 2;
    LatentGP gp = random_latent(rng, m, q);
    GradProbe probe;
    probe.X = random_inputs(rng, n, q);
    probe.w = Eigen::VectorXd(n);
    probe.u = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) {
        probe.w(i) = rng.normal();
        probe.u(i) = rng.normal();
    }

    const auto gm = marginal_grads(gp, probe.X, probe.w, probe.u);
    const auto gk = kl_grads(gp);

    // upper triangle of the L gradient stays exactly zero
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            CHECK(gm.d_L_u(i, j) == 0.0);
            CHECK(gk.d_L_u(i, j) == 0.0);
        }

    auto fd_check = [&](double analytic, auto&& mutate) {
        const double h = 1e-6;
        LatentGP gp_p = gp, gp_m = gp;
        mutate(gp_p, h);
        mutate(gp_m, -h);
        const double fd = (probe(gp_p) - probe(gp_m)) / (2 * h);
        CHECK(oracles::rel_err(analytic, fd) < 1e-4);
    };

    for (int i = 0; i < m; ++i)
        fd_check(gm.d_mu_u(i) + gk.d_mu_u(i), [&](LatentGP& g, double h) { g.mu_u(i) += h; });
    for (int i = 0; i < m; ++i)
        for (int j = 0; j <= i; ++j)
            fd_check(gm.d_L_u(i, j) + gk.d_L_u(i, j),
                     [&](LatentGP& g, double h) { g.L_u(i, j) += h; });
    const Eigen::VectorXd h0 = gp.kernel.hypers();
    for (Eigen::Index t = 0; t < h0.size(); ++t)
        fd_check(gm.d_hypers(t) + gk.d_hypers(t), [&](LatentGP& g, double h) {
            Eigen::VectorXd hh = h0;
            hh(t) += h;
            g.kernel.set_hypers(hh);
        });
    for (int i = 0; i < m; ++i)
        for (int d = 0; d < q; ++d)
            fd_check(gm.d_Z(i, d) + gk.d_Z(i, d), [&](LatentGP& g, double h) { g.Z(i, d) += h; });
    fd_check(gm.d_prior_mean, [&](LatentGP& g, double h) { g.prior_mean += h; });
}

TEST_CASE("latent validation rejects malformed models") {
    Rng rng(113);
    LatentGP gp = random_latent(rng, 4, 2);
    LatentGP bad = gp;
    bad.mu_u = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = gp;
    bad.L_u(0, 0) = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = gp;
    bad.L_u(0, 2) = 0.3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
