#include "cgp/svgp.hpp"

#include <cmath>

#include "cgp/errors.hpp"

namespace cgp {

void LatentGP::validate() const {
    const Eigen::Index m = Z.rows();
    if (mu_u.size() != m || L_u.rows() != m || L_u.cols() != m)
        throw ConfigError("latent GP shapes disagree (Z rows, mu_u, L_u)");
    for (Eigen::Index i = 0; i < m; ++i) {
        if (!(L_u(i, i) > 0.0)) throw ConfigError("L_u diagonal must be positive");
        for (Eigen::Index j = i + 1; j < m; ++j)
            if (L_u(i, j) != 0.0) throw ConfigError("L_u must be lower triangular");
    }
    kernel.validate(static_cast<int>(Z.cols()));
}

LatentMarginals marginals(const LatentGP& gp, const Eigen::MatrixXd& X) {
    gp.validate();
    if (X.cols() != gp.Z.cols()) throw ConfigError("marginals: input dimension mismatch with Z");
    const Eigen::Index n = X.rows();
    LatentMarginals out;
    if (n == 0) {
        out.mean.resize(0);
        out.var.resize(0);
        return out;
    }
    const Eigen::MatrixXd Kuu = gram(gp.kernel, gp.Z, gp.Z);
    const Eigen::MatrixXd Kuf = gram(gp.kernel, gp.Z, X);  // m x n
    const Eigen::VectorXd kdiag = gram_diag(gp.kernel, X);

    const auto llt = cholesky_with_jitter(Kuu);
    const Eigen::MatrixXd A = llt.solve(Kuf);  // (Kuu + jit)^{-1} K_uf, m x n

    out.mean = A.transpose() * gp.mu_u;
    out.mean.array() += gp.prior_mean;

    // var_i = kdiag_i - a_i' k_i + |L_u' a_i|^2, i.e. the (S - Kuu) correction
    // evaluated against the same jittered Kuu the solve used.
    const Eigen::MatrixXd LtA = gp.L_u.transpose() * A;
    out.var = kdiag - (A.cwiseProduct(Kuf)).colwise().sum().transpose() +
              LtA.colwise().squaredNorm().transpose();
    out.var = out.var.cwiseMax(0.0);
    return out;
}

double kl_gaussian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& L_lower,
                   const Eigen::MatrixXd& K) {
    const Eigen::Index m = mu.size();
    const auto llt = cholesky_with_jitter(K);
    const Eigen::MatrixXd Lk = llt.matrixL();

    // tr(K^{-1} S) = |Lk^{-1} L|_F^2, mu' K^{-1} mu = |Lk^{-1} mu|^2
    const Eigen::MatrixXd W = Lk.triangularView<Eigen::Lower>().solve(L_lower);
    const Eigen::VectorXd w = Lk.triangularView<Eigen::Lower>().solve(mu);
    double logdet_k = 0.0, logdet_s = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        logdet_k += 2.0 * std::log(Lk(i, i));
        logdet_s += 2.0 * std::log(L_lower(i, i));
    }
    return 0.5 * (W.squaredNorm() + w.squaredNorm() - static_cast<double>(m) + logdet_k -
                  logdet_s);
}

double kl_to_prior(const LatentGP& gp) {
    gp.validate();
    return kl_gaussian(gp.mu_u, gp.L_u, gram(gp.kernel, gp.Z, gp.Z));
}

namespace {

Eigen::MatrixXd tril(Eigen::MatrixXd M) {
    return M.triangularView<Eigen::Lower>();
}

// The jitter added before factorization is 1e-6 x mean(diag Kuu), so an
// adjoint G on the jittered matrix picks up a diagonal correction of
// tr(G) * 1e-6 / m on the raw one.
Eigen::MatrixXd raw_kuu_adjoint(const Eigen::MatrixXd& G_jittered) {
    Eigen::MatrixXd G = G_jittered;
    G.diagonal().array() += 1e-6 * G_jittered.trace() / static_cast<double>(G.rows());
    return G;
}

// chains a Kuu/Kuf/kdiag adjoint triple into hyperparameter and Z gradients
void chain_to_kernel(const LatentGP& gp, const Eigen::MatrixXd& X,
                     const Eigen::MatrixXd& G_Kuu_raw, const Eigen::MatrixXd* G_Kuf,
                     const Eigen::VectorXd* d_kdiag, LatentGrads& out) {
    const int q = static_cast<int>(gp.Z.cols());

    const auto dKuu = grad_hyper(gp.kernel, gp.Z, gp.Z);
    std::vector<Eigen::MatrixXd> dKuf;
    std::vector<Eigen::VectorXd> dkdiag;
    if (G_Kuf) dKuf = grad_hyper(gp.kernel, gp.Z, X);
    if (d_kdiag) dkdiag = grad_hyper_diag(gp.kernel, X);
    for (std::size_t t = 0; t < dKuu.size(); ++t) {
        double g = G_Kuu_raw.cwiseProduct(dKuu[t]).sum();
        if (G_Kuf) g += G_Kuf->cwiseProduct(dKuf[t]).sum();
        if (d_kdiag) g += d_kdiag->dot(dkdiag[t]);
        out.d_hypers(static_cast<Eigen::Index>(t)) += g;
    }

    const auto Duu = grad_inputs(gp.kernel, gp.Z, gp.Z);  // m x m per dim
    const Eigen::MatrixXd G_sym = G_Kuu_raw + G_Kuu_raw.transpose();
    std::vector<Eigen::MatrixXd> Dfu;
    if (G_Kuf) Dfu = grad_inputs(gp.kernel, X, gp.Z);  // n x m per dim
    for (int d = 0; d < q; ++d) {
        out.d_Z.col(d) +=
            (G_sym.cwiseProduct(Duu[static_cast<std::size_t>(d)])).colwise().sum().transpose();
        if (G_Kuf)
            out.d_Z.col(d) +=
                (G_Kuf->cwiseProduct(Dfu[static_cast<std::size_t>(d)].transpose()))
                    .rowwise()
                    .sum();
    }
}

}  // namespace

LatentGrads marginal_grads(const LatentGP& gp, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& d_mean, const Eigen::VectorXd& d_var) {
    gp.validate();
    const Eigen::Index n = X.rows(), m = gp.Z.rows();
    const int q = static_cast<int>(gp.Z.cols());
    if (d_mean.size() != n || d_var.size() != n)
        throw ConfigError("marginal_grads: adjoint length mismatch");

    LatentGrads out;
    out.d_mu_u = Eigen::VectorXd::Zero(m);
    out.d_L_u = Eigen::MatrixXd::Zero(m, m);
    out.d_hypers = Eigen::VectorXd::Zero(gp.kernel.hyper_count());
    out.d_Z = Eigen::MatrixXd::Zero(m, q);
    if (n == 0) return out;

    const Eigen::MatrixXd Kuu = gram(gp.kernel, gp.Z, gp.Z);
    const Eigen::MatrixXd Kuf = gram(gp.kernel, gp.Z, X);
    const auto llt = cholesky_with_jitter(Kuu);
    Eigen::MatrixXd Kuu_j = Kuu;
    Kuu_j.diagonal().array() += jitter_for(Kuu);

    const Eigen::MatrixXd A = llt.solve(Kuf);              // m x n
    const Eigen::VectorXd alpha = llt.solve(gp.mu_u);      // m
    const Eigen::MatrixXd S = gp.L_u * gp.L_u.transpose();
    const Eigen::MatrixXd C = llt.solve((S - Kuu_j) * A);  // m x n

    out.d_prior_mean = d_mean.sum();
    out.d_mu_u = A * d_mean;

    // variance route through S = L L'
    const Eigen::MatrixXd AdU = A * d_var.asDiagonal();  // m x n
    const Eigen::MatrixXd G_S = AdU * A.transpose();
    out.d_L_u = tril((G_S + G_S.transpose()) * gp.L_u);

    // adjoints on the kernel matrices; everything Kuu-side is against the
    // jittered matrix and converted afterwards
    const Eigen::MatrixXd G_Kuf = alpha * d_mean.transpose() + 2.0 * C * d_var.asDiagonal();
    const Eigen::MatrixXd G_Kuu_j = -(A * d_mean) * alpha.transpose() -
                                    2.0 * C * d_var.asDiagonal() * A.transpose() -
                                    AdU * A.transpose();

    chain_to_kernel(gp, X, raw_kuu_adjoint(G_Kuu_j), &G_Kuf, &d_var, out);
    return out;
}

LatentGrads kl_grads(const LatentGP& gp) {
    gp.validate();
    const Eigen::Index m = gp.Z.rows();
    const int q = static_cast<int>(gp.Z.cols());
    const Eigen::MatrixXd Kuu = gram(gp.kernel, gp.Z, gp.Z);
    const auto llt = cholesky_with_jitter(Kuu);

    const Eigen::VectorXd alpha = llt.solve(gp.mu_u);
    const Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::MatrixXd KinvS = llt.solve(gp.L_u * gp.L_u.transpose());

    LatentGrads out;
    out.d_mu_u = alpha;
    // d/dL of (tr(K^{-1} L L') - log|L L'|)/2 = K^{-1} L - L^{-T}
    const Eigen::MatrixXd Linv_t = gp.L_u.triangularView<Eigen::Lower>()
                                       .solve(Eigen::MatrixXd::Identity(m, m))
                                       .transpose();
    out.d_L_u = tril(Kinv * gp.L_u - Linv_t);

    // dKL/dKuu = (K^{-1} - K^{-1}SK^{-1} - alpha alpha')/2 on the jittered K
    const Eigen::MatrixXd G_Kuu_j = 0.5 * (Kinv - KinvS * Kinv - alpha * alpha.transpose());

    out.d_hypers = Eigen::VectorXd::Zero(gp.kernel.hyper_count());
    out.d_Z = Eigen::MatrixXd::Zero(m, q);
    out.d_prior_mean = 0.0;
    chain_to_kernel(gp, gp.Z, raw_kuu_adjoint(G_Kuu_j), nullptr, nullptr, out);
    return out;
}

}  // namespace cgp
