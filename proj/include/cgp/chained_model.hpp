#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cgp/dataset.hpp"
#include "cgp/errors.hpp"
#include "cgp/likelihoods.hpp"
#include "cgp/svgp.hpp"

namespace cgp {

// One chain of the model: either a sparse GP latent or a learnable constant
// (the constant form gives the homogeneous baselines, e.g. a sparse-Gaussian
// regression as a chained model with frozen noise latent).
struct Latent {
    enum class Kind { Gp, Constant };
    Kind kind = Kind::Gp;
    LatentGP gp;
    double constant = 0.0;
    bool constant_trainable = true;

    static Latent gp_latent(LatentGP g) { return {Kind::Gp, std::move(g), 0.0, false}; }
    static Latent constant_latent(double value, bool trainable = true) {
        return {Kind::Constant, {}, value, trainable};
    }
};

// B latent chains + factorized likelihood + quadrature rule. All GP latents
// share the same inducing inputs Z.
struct ChainedModel {
    std::vector<Latent> latents;  // size 2 for every shipped family
    Likelihood likelihood;
    GaussHermiteRule rule;

    void validate() const;  // arity, shared Z, per-latent invariants
    Eigen::Index input_dim() const;
    LatentMarginals latent_marginals(int which, const Eigen::MatrixXd& X) const;
};

// ---- parameter packing ------------------------------------------------------
// Flat vector for the optimizer. Positivity-constrained entries (L_u diagonal,
// kernel hypers, nu) are stored in log space. Z appears once, shared.

struct ParamLayout {
    struct Block {
        std::string name;
        Eigen::Index offset = 0;
        Eigen::Index size = 0;
        bool variational = false;  // phase-1 block (mu_u, L_u)
    };
    std::vector<Block> blocks;
    Eigen::Index total = 0;
    const Block* find(const std::string& name) const;
};

ParamLayout layout_of(const ChainedModel& model);
Eigen::VectorXd pack_params(const ChainedModel& model);
void unpack_params(ChainedModel& model, const Eigen::VectorXd& params);

struct GradientRecord {
    struct PerLatent {
        Eigen::VectorXd d_mu_u;
        Eigen::MatrixXd d_L_u;
        Eigen::VectorXd d_hypers;
        double d_prior_mean = 0.0;
        double d_constant = 0.0;
    };
    std::vector<PerLatent> latents;
    Eigen::MatrixXd d_Z;  // summed over latents (shared)
    double d_nu = 0.0;
};

// chains the record through the log-space reparameterizations into layout order
Eigen::VectorXd pack_grads(const ChainedModel& model, const GradientRecord& grads);

// ---- objective --------------------------------------------------------------

// (n/|batch|) sum_i E_q[log p(y_i|f_i,g_i)] - sum_b KL_b. Full batch gives
// the exact bound; the KL terms are never scaled.
double elbo(const ChainedModel& model, const Dataset& data, const std::vector<int>& batch);

struct ElboResult {
    double value = 0.0;
    GradientRecord grads;
};
ElboResult elbo_with_grads(const ChainedModel& model, const Dataset& data,
                           const std::vector<int>& batch);

std::vector<int> all_indices(Eigen::Index n);

// ---- fitting ----------------------------------------------------------------

struct TrainConfig {
    int batch_size = 256;  // clipped to n
    enum class Optimizer { Adagrad, Rmsprop };
    Optimizer optimizer = Optimizer::Rmsprop;
    double rate = 1e-3;
    int iters = 2000;
    int fixed_iters = 100;  // phase 1: only mu_u and L_u move
    std::uint64_t seed = 0;
    int window = 50;  // moving-average monitoring width
    bool fix_lengthscales = false;

    void validate(Eigen::Index n) const;
};

struct TraceRow {
    int iteration = 0;
    double elbo = 0.0;
    int phase = 1;
};

// Non-finite bound estimates abort the run with context.
struct FitAbort : NumericalError {
    FitAbort(int iteration, Eigen::VectorXd params)
        : NumericalError("non-finite ELBO at iteration " + std::to_string(iteration)),
          iteration(iteration),
          params(std::move(params)) {}
    int iteration;
    Eigen::VectorXd params;  // snapshot at the offending step
};

std::vector<TraceRow> fit(ChainedModel& model, const Dataset& data, const TrainConfig& config);

// ---- prediction ---------------------------------------------------------------

struct LatentPredictions {
    LatentMarginals f;
    LatentMarginals g;
};
LatentPredictions predict_latents(const ChainedModel& model, const Eigen::MatrixXd& X_star);

// ---- construction -------------------------------------------------------------

struct ModelInit {
    int inducing = 100;
    int quad_order = 20;
    KernelSpec kernel_f;  // hyper_count()==0 means "default from data"
    KernelSpec kernel_g;
    bool kernel_f_set = false;
    bool kernel_g_set = false;
    bool g_constant = false;  // frozen-constant second latent baseline
    std::uint64_t seed = 0;
};

// Initialization: Z from a k-means summary of X, mu_u ~ N(0, 0.01),
// L_u = I, ARD lengthscales at the per-dimension input scale plus a bias
// term, family-informed prior means.
ChainedModel init_model(const Dataset& data, const Likelihood& lik, const ModelInit& init);

}  // namespace cgp
