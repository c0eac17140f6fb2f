#pragma once

#include <Eigen/Dense>

#include "cgp/kernels.hpp"

namespace cgp {

// One sparse GP latent: inducing inputs Z (shared across latents by the
// chained model), variational mean mu_u and Cholesky factor L_u of the
// variational covariance S = L_u L_u^T, plus a constant prior mean.
struct LatentGP {
    Eigen::MatrixXd Z;     // m x q
    Eigen::VectorXd mu_u;  // m
    Eigen::MatrixXd L_u;   // m x m lower triangular, positive diagonal
    KernelSpec kernel;
    double prior_mean = 0.0;

    Eigen::Index inducing_count() const { return Z.rows(); }
    Eigen::Index input_dim() const { return Z.cols(); }
    void validate() const;  // shape agreement, triangular structure
};

struct LatentMarginals {
    Eigen::VectorXd mean;
    Eigen::VectorXd var;  // floored at 0, never silently negative
};

// q(x) marginals at the rows of X:
//   mean = K_xu Kuu^{-1} mu_u + prior_mean
//   var  = diag(K_xx) + diag(K_xu Kuu^{-1} (S - Kuu) Kuu^{-1} K_ux)
LatentMarginals marginals(const LatentGP& gp, const Eigen::MatrixXd& X);

// identical computation at test inputs; shared implementation by contract
inline LatentMarginals predict_latent(const LatentGP& gp, const Eigen::MatrixXd& X) {
    return marginals(gp, X);
}

// KL(N(mu, L L^T) || N(0, K)) in the closed Gaussian form; K gets the usual
// jitter before factorization.
double kl_gaussian(const Eigen::VectorXd& mu, const Eigen::MatrixXd& L_lower,
                   const Eigen::MatrixXd& K);
double kl_to_prior(const LatentGP& gp);

struct LatentGrads {
    Eigen::VectorXd d_mu_u;
    Eigen::MatrixXd d_L_u;  // strictly lower + diagonal; upper entries zero
    Eigen::VectorXd d_hypers;
    Eigen::MatrixXd d_Z;
    double d_prior_mean = 0.0;
};

// Chain-rule accumulation through marginals(): given dL/d(mean) and
// dL/d(var) at the rows of X, return gradients for every latent parameter
// block. KL gradient contributions are separate (kl_grads) so the caller can
// scale the data term without touching them.
LatentGrads marginal_grads(const LatentGP& gp, const Eigen::MatrixXd& X,
                           const Eigen::VectorXd& d_mean, const Eigen::VectorXd& d_var);

LatentGrads kl_grads(const LatentGP& gp);

}  // namespace cgp
