#include "cgp/chained_model.hpp"

#include <cmath>
#include <limits>

#include "cgp/parallel.hpp"
#include "cgp/rng.hpp"

namespace cgp {

void ChainedModel::validate() const {
    if (static_cast<int>(latents.size()) != Likelihood::arity)
        throw ConfigError("model must have exactly " + std::to_string(Likelihood::arity) +
                          " latent chains");
    const Eigen::MatrixXd* Z = nullptr;
    for (const auto& lat : latents) {
        if (lat.kind != Latent::Kind::Gp) continue;
        lat.gp.validate();
        if (Z && (Z->rows() != lat.gp.Z.rows() || Z->cols() != lat.gp.Z.cols() ||
                  *Z != lat.gp.Z))
            throw ConfigError("all GP latents must share identical inducing inputs");
        Z = &lat.gp.Z;
    }
    if (rule.order < 1) throw ConfigError("model quadrature rule is unset");
}

Eigen::Index ChainedModel::input_dim() const {
    for (const auto& lat : latents)
        if (lat.kind == Latent::Kind::Gp) return lat.gp.input_dim();
    return 0;
}

LatentMarginals ChainedModel::latent_marginals(int which, const Eigen::MatrixXd& X) const {
    const Latent& lat = latents.at(static_cast<std::size_t>(which));
    if (lat.kind == Latent::Kind::Gp) return marginals(lat.gp, X);
    LatentMarginals m;
    m.mean = Eigen::VectorXd::Constant(X.rows(), lat.constant);
    m.var = Eigen::VectorXd::Zero(X.rows());
    return m;
}

// ---- layout/packing ---------------------------------------------------------

namespace {

Eigen::Index packed_tri_size(Eigen::Index m) { return m * (m + 1) / 2; }

}  // namespace

const ParamLayout::Block* ParamLayout::find(const std::string& name) const {
    for (const auto& b : blocks)
        if (b.name == name) return &b;
    return nullptr;
}

ParamLayout layout_of(const ChainedModel& model) {
    ParamLayout lay;
    auto add = [&](const std::string& name, Eigen::Index size, bool variational) {
        lay.blocks.push_back({name, lay.total, size, variational});
        lay.total += size;
    };
    bool any_gp = false;
    for (std::size_t b = 0; b < model.latents.size(); ++b) {
        const auto& lat = model.latents[b];
        const std::string p = "latent" + std::to_string(b) + ".";
        if (lat.kind == Latent::Kind::Gp) {
            any_gp = true;
            const Eigen::Index m = lat.gp.inducing_count();
            add(p + "mu_u", m, true);
            add(p + "L_u", packed_tri_size(m), true);
            add(p + "prior_mean", 1, false);
            add(p + "hypers", lat.gp.kernel.hyper_count(), false);
        } else if (lat.constant_trainable) {
            add(p + "constant", 1, false);
        }
    }
    if (any_gp) {
        for (const auto& lat : model.latents)
            if (lat.kind == Latent::Kind::Gp) {
                add("Z", lat.gp.Z.size(), false);
                break;
            }
    }
    if (model.likelihood.global_count() > 0) add("likelihood.nu", 1, false);
    return lay;
}

Eigen::VectorXd pack_params(const ChainedModel& model) {
    const ParamLayout lay = layout_of(model);
    Eigen::VectorXd p(lay.total);
    for (std::size_t b = 0; b < model.latents.size(); ++b) {
        const auto& lat = model.latents[b];
        const std::string pre = "latent" + std::to_string(b) + ".";
        if (lat.kind == Latent::Kind::Gp) {
            const Eigen::Index m = lat.gp.inducing_count();
            p.segment(lay.find(pre + "mu_u")->offset, m) = lat.gp.mu_u;
            Eigen::Index at = lay.find(pre + "L_u")->offset;
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j <= i; ++j)
                    p(at++) = i == j ? std::log(lat.gp.L_u(i, i)) : lat.gp.L_u(i, j);
            p(lay.find(pre + "prior_mean")->offset) = lat.gp.prior_mean;
            const Eigen::VectorXd h = lat.gp.kernel.hypers();
            p.segment(lay.find(pre + "hypers")->offset, h.size()) = h.array().log();
        } else if (lat.constant_trainable) {
            p(lay.find(pre + "constant")->offset) = lat.constant;
        }
    }
    if (const auto* zb = lay.find("Z")) {
        for (const auto& lat : model.latents)
            if (lat.kind == Latent::Kind::Gp) {
                Eigen::Map<const Eigen::VectorXd> z(lat.gp.Z.data(), lat.gp.Z.size());
                p.segment(zb->offset, zb->size) = z;
                break;
            }
    }
    if (const auto* nb = lay.find("likelihood.nu")) p(nb->offset) = std::log(model.likelihood.nu);
    return p;
}

void unpack_params(ChainedModel& model, const Eigen::VectorXd& params) {
    const ParamLayout lay = layout_of(model);
    if (params.size() != lay.total) throw ConfigError("parameter vector length mismatch");
    for (std::size_t b = 0; b < model.latents.size(); ++b) {
        auto& lat = model.latents[b];
        const std::string pre = "latent" + std::to_string(b) + ".";
        if (lat.kind == Latent::Kind::Gp) {
            const Eigen::Index m = lat.gp.inducing_count();
            lat.gp.mu_u = params.segment(lay.find(pre + "mu_u")->offset, m);
            Eigen::Index at = lay.find(pre + "L_u")->offset;
            lat.gp.L_u.setZero();
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j <= i; ++j)
                    lat.gp.L_u(i, j) = i == j ? std::exp(params(at++)) : params(at++);
            lat.gp.prior_mean = params(lay.find(pre + "prior_mean")->offset);
            const auto* hb = lay.find(pre + "hypers");
            lat.gp.kernel.set_hypers(params.segment(hb->offset, hb->size).array().exp());
        } else if (lat.constant_trainable) {
            lat.constant = params(lay.find(pre + "constant")->offset);
        }
    }
    if (const auto* zb = lay.find("Z")) {
        for (auto& lat : model.latents)
            if (lat.kind == Latent::Kind::Gp) {
                Eigen::Map<Eigen::VectorXd> z(lat.gp.Z.data(), lat.gp.Z.size());
                z = params.segment(zb->offset, zb->size);
            }
    }
    if (const auto* nb = lay.find("likelihood.nu"))
        model.likelihood.nu = std::exp(params(nb->offset));
}

Eigen::VectorXd pack_grads(const ChainedModel& model, const GradientRecord& grads) {
    const ParamLayout lay = layout_of(model);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(lay.total);
    for (std::size_t b = 0; b < model.latents.size(); ++b) {
        const auto& lat = model.latents[b];
        const auto& gl = grads.latents[b];
        const std::string pre = "latent" + std::to_string(b) + ".";
        if (lat.kind == Latent::Kind::Gp) {
            const Eigen::Index m = lat.gp.inducing_count();
            g.segment(lay.find(pre + "mu_u")->offset, m) = gl.d_mu_u;
            Eigen::Index at = lay.find(pre + "L_u")->offset;
            for (Eigen::Index i = 0; i < m; ++i)
                for (Eigen::Index j = 0; j <= i; ++j)
                    g(at++) = i == j ? gl.d_L_u(i, i) * lat.gp.L_u(i, i) : gl.d_L_u(i, j);
            g(lay.find(pre + "prior_mean")->offset) = gl.d_prior_mean;
            const auto* hb = lay.find(pre + "hypers");
            g.segment(hb->offset, hb->size) =
                gl.d_hypers.array() * lat.gp.kernel.hypers().array();
        } else if (lat.constant_trainable) {
            g(lay.find(pre + "constant")->offset) = gl.d_constant;
        }
    }
    if (const auto* zb = lay.find("Z")) {
        Eigen::Map<const Eigen::VectorXd> z(grads.d_Z.data(), grads.d_Z.size());
        g.segment(zb->offset, zb->size) = z;
    }
    if (const auto* nb = lay.find("likelihood.nu"))
        g(nb->offset) = grads.d_nu * model.likelihood.nu;
    return g;
}

// ---- objective --------------------------------------------------------------

std::vector<int> all_indices(Eigen::Index n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(i);
    return idx;
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    return out;
}

void check_batch(const Dataset& data, const std::vector<int>& batch) {
    if (batch.empty()) throw ConfigError("batch must not be empty");
    for (int i : batch)
        if (i < 0 || i >= data.n()) throw ConfigError("batch index out of range");
}

}  // namespace

double elbo(const ChainedModel& model, const Dataset& data, const std::vector<int>& batch) {
    model.validate();
    check_batch(data, batch);
    const Eigen::Index nb = static_cast<Eigen::Index>(batch.size());
    const double scale = static_cast<double>(data.n()) / static_cast<double>(nb);

    const Eigen::MatrixXd Xb = gather_rows(data.X, batch);
    const LatentMarginals mf = model.latent_marginals(0, Xb);
    const LatentMarginals mg = model.latent_marginals(1, Xb);

    std::vector<double> terms(batch.size());
    parallel_for(nb, [&](std::ptrdiff_t i) {
        const int r = batch[static_cast<std::size_t>(i)];
        terms[static_cast<std::size_t>(i)] =
            variational_expectation(model.likelihood, data.y(r), data.censor_flag(r), mf.mean(i),
                                    mf.var(i), mg.mean(i), mg.var(i), model.rule)
                .value;
    });
    double acc = 0.0;
    for (double t : terms) acc += t;  // fixed reduction order

    double kl = 0.0;
    for (const auto& lat : model.latents)
        if (lat.kind == Latent::Kind::Gp) kl += kl_to_prior(lat.gp);
    return scale * acc - kl;
}

ElboResult elbo_with_grads(const ChainedModel& model, const Dataset& data,
                           const std::vector<int>& batch) {
    model.validate();
    check_batch(data, batch);
    const Eigen::Index nb = static_cast<Eigen::Index>(batch.size());
    const double scale = static_cast<double>(data.n()) / static_cast<double>(nb);

    const Eigen::MatrixXd Xb = gather_rows(data.X, batch);
    const LatentMarginals mf = model.latent_marginals(0, Xb);
    const LatentMarginals mg = model.latent_marginals(1, Xb);

    std::vector<VariationalExpectation> terms(batch.size());
    parallel_for(nb, [&](std::ptrdiff_t i) {
        const int r = batch[static_cast<std::size_t>(i)];
        terms[static_cast<std::size_t>(i)] =
            variational_expectation(model.likelihood, data.y(r), data.censor_flag(r), mf.mean(i),
                                    mf.var(i), mg.mean(i), mg.var(i), model.rule);
    });

    ElboResult out;
    out.grads.latents.resize(model.latents.size());
    Eigen::VectorXd w_f(nb), u_f(nb), w_g(nb), u_g(nb);
    double value = 0.0, d_nu = 0.0;
    for (Eigen::Index i = 0; i < nb; ++i) {
        const auto& t = terms[static_cast<std::size_t>(i)];
        value += t.value;
        w_f(i) = scale * t.d_mf;
        u_f(i) = scale * t.d_vf;
        w_g(i) = scale * t.d_mg;
        u_g(i) = scale * t.d_vg;
        d_nu += t.d_nu;
    }
    out.value = scale * value;
    out.grads.d_nu = scale * d_nu;

    bool z_sized = false;
    for (std::size_t b = 0; b < model.latents.size(); ++b) {
        const auto& lat = model.latents[b];
        auto& gl = out.grads.latents[b];
        const Eigen::VectorXd& w = b == 0 ? w_f : w_g;
        const Eigen::VectorXd& u = b == 0 ? u_f : u_g;
        if (lat.kind == Latent::Kind::Gp) {
            LatentGrads dg = marginal_grads(lat.gp, Xb, w, u);
            const LatentGrads dkl = kl_grads(lat.gp);
            out.value -= kl_to_prior(lat.gp);
            gl.d_mu_u = dg.d_mu_u - dkl.d_mu_u;
            gl.d_L_u = dg.d_L_u - dkl.d_L_u;
            gl.d_hypers = dg.d_hypers - dkl.d_hypers;
            gl.d_prior_mean = dg.d_prior_mean;
            if (!z_sized) {
                out.grads.d_Z = Eigen::MatrixXd::Zero(lat.gp.Z.rows(), lat.gp.Z.cols());
                z_sized = true;
            }
            out.grads.d_Z += dg.d_Z - dkl.d_Z;
        } else {
            gl.d_constant = w.sum();
        }
    }
    return out;
}

// ---- fitting ----------------------------------------------------------------

void TrainConfig::validate(Eigen::Index n) const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (iters < 0 || fixed_iters < 0) throw ConfigError("iteration counts must be nonnegative");
    if (n < 1) throw ConfigError("empty dataset");
}

std::vector<TraceRow> fit(ChainedModel& model, const Dataset& data, const TrainConfig& config) {
    model.validate();
    validate_for(model.likelihood, data);
    config.validate(data.n());

    const int n = static_cast<int>(data.n());
    const int bsize = std::min(config.batch_size, n);
    const ParamLayout lay = layout_of(model);
    Eigen::VectorXd params = pack_params(model);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(lay.total);
    constexpr double kRmsDecay = 0.9;
    constexpr double kEps = 1e-8;

    // phase masks; lengthscale pinning applies to phase 2
    Eigen::ArrayXd mask1 = Eigen::ArrayXd::Zero(lay.total);
    Eigen::ArrayXd mask2 = Eigen::ArrayXd::Ones(lay.total);
    for (const auto& blk : lay.blocks)
        if (blk.variational) mask1.segment(blk.offset, blk.size).setOnes();
    if (config.fix_lengthscales) {
        for (std::size_t b = 0; b < model.latents.size(); ++b) {
            const auto& lat = model.latents[b];
            if (lat.kind != Latent::Kind::Gp) continue;
            const auto* hb = lay.find("latent" + std::to_string(b) + ".hypers");
            const auto is_ls = lat.gp.kernel.hyper_is_lengthscale();
            for (Eigen::Index t = 0; t < hb->size; ++t)
                if (is_ls[static_cast<std::size_t>(t)]) mask2(hb->offset + t) = 0.0;
        }
    }

    Rng rng(Rng::derive(config.seed, 0x5eedf17));
    std::vector<int> order = all_indices(n);
    std::size_t cursor = order.size();  // trigger shuffle on first minibatch

    std::vector<TraceRow> trace;
    trace.reserve(static_cast<std::size_t>(config.iters));
    std::vector<int> batch;
    for (int iter = 1; iter <= config.iters; ++iter) {
        if (bsize >= n) {
            batch = order;
        } else {
            batch.clear();
            for (int k = 0; k < bsize; ++k) {
                if (cursor >= order.size()) {
                    rng.shuffle(order);
                    cursor = 0;
                }
                batch.push_back(order[cursor++]);
            }
        }

        const ElboResult res = elbo_with_grads(model, data, batch);
        if (!std::isfinite(res.value)) throw FitAbort(iter, params);
        const Eigen::VectorXd g = pack_grads(model, res.grads);
        if (!g.allFinite()) throw FitAbort(iter, params);

        const int phase = iter <= config.fixed_iters ? 1 : 2;
        const Eigen::ArrayXd& mask = phase == 1 ? mask1 : mask2;
        if (config.optimizer == TrainConfig::Optimizer::Adagrad) {
            acc.array() += mask * g.array().square();
        } else {
            acc.array() = mask * (kRmsDecay * acc.array() + (1.0 - kRmsDecay) * g.array().square()) +
                          (1.0 - mask) * acc.array();
        }
        params.array() += mask * config.rate * g.array() / (acc.array().sqrt() + kEps);
        unpack_params(model, params);
        trace.push_back({iter, res.value, phase});
    }
    return trace;
}

// ---- prediction ---------------------------------------------------------------

LatentPredictions predict_latents(const ChainedModel& model, const Eigen::MatrixXd& X_star) {
    model.validate();
    LatentPredictions out;
    out.f = model.latent_marginals(0, X_star);
    out.g = model.latent_marginals(1, X_star);
    return out;
}

// ---- construction -------------------------------------------------------------

namespace {

double sample_variance(const Eigen::VectorXd& y) {
    if (y.size() < 2) return 1.0;
    const double mu = y.mean();
    return (y.array() - mu).square().sum() / static_cast<double>(y.size() - 1);
}

double median_of(Eigen::VectorXd y) {
    std::sort(y.data(), y.data() + y.size());
    const Eigen::Index n = y.size();
    return n % 2 == 1 ? y(n / 2) : 0.5 * (y(n / 2 - 1) + y(n / 2));
}

KernelSpec default_kernel(const Dataset& data) {
    const int q = static_cast<int>(data.q());
    Eigen::VectorXd ls(q);
    for (int d = 0; d < q; ++d) {
        const double sd = std::sqrt(sample_variance(data.X.col(d)));
        ls(d) = sd > 0.0 ? sd : 1.0;
    }
    return KernelSpec::sum({KernelSpec::ard_rbf(1.0, ls), KernelSpec::bias(1.0)});
}

// k-means++ seeding plus a few Lloyd rounds; near-duplicate inducing inputs
// make the unwhitened variance term explode, so plain subsampling is not
// good enough
Eigen::MatrixXd kmeans_centers(const Eigen::MatrixXd& X, int k, Rng& rng) {
    const Eigen::Index n = X.rows();
    if (k >= n) return X;
    std::vector<Eigen::Index> seeds;
    seeds.push_back(static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(n)));
    Eigen::VectorXd d2 =
        (X.rowwise() - X.row(seeds[0])).rowwise().squaredNorm();
    while (static_cast<int>(seeds.size()) < k) {
        const double total = d2.sum();
        Eigen::Index pick = n - 1;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
        }
        seeds.push_back(pick);
        d2 = d2.cwiseMin((X.rowwise() - X.row(pick)).rowwise().squaredNorm());
    }
    Eigen::MatrixXd C(k, X.cols());
    for (int i = 0; i < k; ++i) C.row(i) = X.row(seeds[static_cast<std::size_t>(i)]);

    std::vector<int> assign(static_cast<std::size_t>(n));
    for (int round = 0; round < 10; ++round) {
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double dist = (X.row(i) - C.row(c)).squaredNorm();
                if (dist < bd) {
                    bd = dist;
                    best = c;
                }
            }
            assign[static_cast<std::size_t>(i)] = best;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, X.cols());
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<std::size_t>(i)]) += X.row(i);
            counts(assign[static_cast<std::size_t>(i)]) += 1.0;
        }
        for (int c = 0; c < k; ++c)
            if (counts(c) > 0.0) C.row(c) = sums.row(c) / counts(c);
    }
    return C;
}

// family-informed prior means keep early iterations in a sane region
std::pair<double, double> default_prior_means(const Dataset& data, const Likelihood& lik) {
    switch (lik.family) {
        case LikelihoodFamily::HetGaussian:
        case LikelihoodFamily::HetStudentT:
            return {data.y.mean(), std::log(std::max(1e-4, 0.5 * sample_variance(data.y)))};
        case LikelihoodFamily::Beta:
            return {0.0, 0.0};
        case LikelihoodFamily::LogLogisticSurvival:
            return {std::log(std::max(1e-8, median_of(data.y))), 0.0};
        case LikelihoodFamily::AdditivePoisson: {
            const double lam = std::max(1e-3, data.y.mean());
            return {std::log(0.5 * lam), std::log(0.5 * lam)};
        }
        case LikelihoodFamily::MultiplicativePoisson: {
            const double lam = std::max(1e-3, data.y.mean());
            return {0.5 * std::log(lam), 0.5 * std::log(lam)};
        }
    }
    return {0.0, 0.0};
}

}  // namespace

ChainedModel init_model(const Dataset& data, const Likelihood& lik, const ModelInit& init) {
    data.validate_shapes();
    validate_for(lik, data);
    if (init.inducing < 1) throw ConfigError("inducing count must be >= 1");

    ChainedModel model;
    model.likelihood = lik;
    model.rule = gh_rule(init.quad_order);

    const int n = static_cast<int>(data.n());
    const int m = std::min(init.inducing, n);

    Rng rng(Rng::derive(init.seed, 0x1717));
    const Eigen::MatrixXd Z = kmeans_centers(data.X, m, rng);

    const auto [pm_f, pm_g] = default_prior_means(data, lik);
    auto make_gp = [&](const KernelSpec& k, bool k_set, double prior_mean) {
        LatentGP gp;
        gp.Z = Z;
        gp.kernel = k_set ? k : default_kernel(data);
        gp.kernel.validate(static_cast<int>(data.q()));
        gp.mu_u = Eigen::VectorXd(m);
        for (int i = 0; i < m; ++i) gp.mu_u(i) = 0.1 * rng.normal();
        // S starts at the prior covariance (identity form in whitened
        // coordinates): KL = 0 and marginal variances bounded by the prior.
        // A literal identity S makes the unwhitened variance term blow up
        // through Kuu's small eigenvalues whenever lengthscales are short.
        gp.L_u = Eigen::MatrixXd(cholesky_with_jitter(gram(gp.kernel, Z, Z)).matrixL());
        gp.prior_mean = prior_mean;
        return gp;
    };

    model.latents.push_back(Latent::gp_latent(make_gp(init.kernel_f, init.kernel_f_set, pm_f)));
    if (init.g_constant) {
        model.latents.push_back(Latent::constant_latent(pm_g, true));
    } else {
        model.latents.push_back(Latent::gp_latent(make_gp(init.kernel_g, init.kernel_g_set, pm_g)));
    }
    model.validate();
    return model;
}

}  // namespace cgp
