#include "cgp/kernels.hpp"

#include <cmath>

#include "cgp/errors.hpp"
#include "cgp/parallel.hpp"

namespace cgp {

namespace {

std::vector<int> effective_dims(const KernelSpec& k, int q) {
    if (!k.active_dims.empty()) return k.active_dims;
    std::vector<int> dims(static_cast<std::size_t>(q));
    for (int d = 0; d < q; ++d) dims[static_cast<std::size_t>(d)] = d;
    return dims;
}

// scaled squared distance over the active dims of an ArdRbf node
double ard_sqdist(const KernelSpec& k, const std::vector<int>& dims,
                  const Eigen::MatrixXd& A, Eigen::Index i, const Eigen::MatrixXd& B,
                  Eigen::Index j) {
    double s = 0.0;
    for (std::size_t d = 0; d < dims.size(); ++d) {
        double diff = (A(i, dims[d]) - B(j, dims[d])) / k.lengthscales(static_cast<Eigen::Index>(d));
        s += diff * diff;
    }
    return s;
}

}  // namespace

KernelSpec KernelSpec::ard_rbf(double variance, Eigen::VectorXd lengthscales,
                               std::vector<int> active_dims) {
    KernelSpec k;
    k.type = Type::ArdRbf;
    k.variance = variance;
    k.lengthscales = std::move(lengthscales);
    k.active_dims = std::move(active_dims);
    return k;
}

KernelSpec KernelSpec::bias(double variance) {
    KernelSpec k;
    k.type = Type::Bias;
    k.variance = variance;
    return k;
}

KernelSpec KernelSpec::sum(std::vector<KernelSpec> children) {
    KernelSpec k;
    k.type = Type::Sum;
    k.children = std::move(children);
    return k;
}

void KernelSpec::validate(int input_dim) const {
    for (int d : active_dims) {
        if (d < 0 || d >= input_dim)
            throw ConfigError("kernel active_dims entry " + std::to_string(d) +
                              " outside input dimension range [0," + std::to_string(input_dim) + ")");
    }
    switch (type) {
        case Type::ArdRbf: {
            if (!(variance > 0.0)) throw ConfigError("ard_rbf variance must be positive");
            std::size_t nd = active_dims.empty() ? static_cast<std::size_t>(input_dim)
                                                 : active_dims.size();
            if (static_cast<std::size_t>(lengthscales.size()) != nd)
                throw ConfigError("ard_rbf needs one lengthscale per active dimension (" +
                                  std::to_string(nd) + "), got " +
                                  std::to_string(lengthscales.size()));
            for (Eigen::Index d = 0; d < lengthscales.size(); ++d)
                if (!(lengthscales(d) > 0.0)) throw ConfigError("ard_rbf lengthscales must be positive");
            break;
        }
        case Type::Bias:
            if (!(variance > 0.0)) throw ConfigError("bias variance must be positive");
            break;
        case Type::Sum:
            if (children.empty()) throw ConfigError("sum kernel needs at least one child");
            for (const auto& c : children) c.validate(input_dim);
            break;
    }
}

int KernelSpec::hyper_count() const {
    switch (type) {
        case Type::ArdRbf: return 1 + static_cast<int>(lengthscales.size());
        case Type::Bias: return 1;
        case Type::Sum: {
            int n = 0;
            for (const auto& c : children) n += c.hyper_count();
            return n;
        }
    }
    return 0;
}

Eigen::VectorXd KernelSpec::hypers() const {
    Eigen::VectorXd h(hyper_count());
    switch (type) {
        case Type::ArdRbf:
            h(0) = variance;
            h.tail(lengthscales.size()) = lengthscales;
            break;
        case Type::Bias:
            h(0) = variance;
            break;
        case Type::Sum: {
            Eigen::Index at = 0;
            for (const auto& c : children) {
                h.segment(at, c.hyper_count()) = c.hypers();
                at += c.hyper_count();
            }
            break;
        }
    }
    return h;
}

void KernelSpec::set_hypers(const Eigen::VectorXd& h) {
    if (h.size() != hyper_count()) throw ConfigError("kernel hyper vector has wrong length");
    switch (type) {
        case Type::ArdRbf:
            variance = h(0);
            lengthscales = h.tail(lengthscales.size());
            break;
        case Type::Bias:
            variance = h(0);
            break;
        case Type::Sum: {
            Eigen::Index at = 0;
            for (auto& c : children) {
                c.set_hypers(h.segment(at, c.hyper_count()));
                at += c.hyper_count();
            }
            break;
        }
    }
}

std::vector<std::string> KernelSpec::hyper_names() const {
    std::vector<std::string> names;
    switch (type) {
        case Type::ArdRbf:
            names.push_back("rbf.variance");
            for (Eigen::Index d = 0; d < lengthscales.size(); ++d)
                names.push_back("rbf.lengthscale" + std::to_string(d));
            break;
        case Type::Bias:
            names.push_back("bias.variance");
            break;
        case Type::Sum:
            for (std::size_t c = 0; c < children.size(); ++c)
                for (const auto& n : children[c].hyper_names())
                    names.push_back("child" + std::to_string(c) + "." + n);
            break;
    }
    return names;
}

std::vector<bool> KernelSpec::hyper_is_lengthscale() const {
    std::vector<bool> mask;
    switch (type) {
        case Type::ArdRbf:
            mask.push_back(false);
            for (Eigen::Index d = 0; d < lengthscales.size(); ++d) mask.push_back(true);
            break;
        case Type::Bias:
            mask.push_back(false);
            break;
        case Type::Sum:
            for (const auto& c : children)
                for (bool b : c.hyper_is_lengthscale()) mask.push_back(b);
            break;
    }
    return mask;
}

Eigen::MatrixXd gram(const KernelSpec& k, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    if (A.cols() != B.cols()) throw ConfigError("gram: input column counts differ");
    const int q = static_cast<int>(A.cols());
    k.validate(q);
    const Eigen::Index n = A.rows(), m = B.rows();
    Eigen::MatrixXd K(n, m);
    switch (k.type) {
        case KernelSpec::Type::ArdRbf: {
            const auto dims = effective_dims(k, q);
            parallel_for(n, [&](std::ptrdiff_t i) {
                for (Eigen::Index j = 0; j < m; ++j)
                    K(i, j) = k.variance * std::exp(-0.5 * ard_sqdist(k, dims, A, i, B, j));
            });
            break;
        }
        case KernelSpec::Type::Bias:
            K.setConstant(k.variance);
            break;
        case KernelSpec::Type::Sum: {
            K.setZero();
            for (const auto& c : k.children) K += gram(c, A, B);
            break;
        }
    }
    return K;
}

Eigen::VectorXd gram_diag(const KernelSpec& k, const Eigen::MatrixXd& A) {
    k.validate(static_cast<int>(A.cols()));
    Eigen::VectorXd d(A.rows());
    switch (k.type) {
        case KernelSpec::Type::ArdRbf:
        case KernelSpec::Type::Bias:
            d.setConstant(k.variance);
            break;
        case KernelSpec::Type::Sum: {
            d.setZero();
            for (const auto& c : k.children) d += gram_diag(c, A);
            break;
        }
    }
    return d;
}

std::vector<Eigen::MatrixXd> grad_hyper(const KernelSpec& k, const Eigen::MatrixXd& A,
                                        const Eigen::MatrixXd& B) {
    if (A.cols() != B.cols()) throw ConfigError("grad_hyper: input column counts differ");
    const int q = static_cast<int>(A.cols());
    k.validate(q);
    const Eigen::Index n = A.rows(), m = B.rows();
    std::vector<Eigen::MatrixXd> grads;
    switch (k.type) {
        case KernelSpec::Type::ArdRbf: {
            const auto dims = effective_dims(k, q);
            grads.assign(static_cast<std::size_t>(1 + k.lengthscales.size()), Eigen::MatrixXd(n, m));
            parallel_for(n, [&](std::ptrdiff_t i) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    double kij = k.variance * std::exp(-0.5 * ard_sqdist(k, dims, A, i, B, j));
                    grads[0](i, j) = kij / k.variance;
                    for (std::size_t d = 0; d < dims.size(); ++d) {
                        double ell = k.lengthscales(static_cast<Eigen::Index>(d));
                        double diff = A(i, dims[d]) - B(j, dims[d]);
                        grads[d + 1](i, j) = kij * diff * diff / (ell * ell * ell);
                    }
                }
            });
            break;
        }
        case KernelSpec::Type::Bias:
            grads.emplace_back(Eigen::MatrixXd::Ones(n, m));
            break;
        case KernelSpec::Type::Sum:
            for (const auto& c : k.children) {
                auto g = grad_hyper(c, A, B);
                grads.insert(grads.end(), std::make_move_iterator(g.begin()),
                             std::make_move_iterator(g.end()));
            }
            break;
    }
    return grads;
}

std::vector<Eigen::VectorXd> grad_hyper_diag(const KernelSpec& k, const Eigen::MatrixXd& A) {
    k.validate(static_cast<int>(A.cols()));
    const Eigen::Index n = A.rows();
    std::vector<Eigen::VectorXd> grads;
    switch (k.type) {
        case KernelSpec::Type::ArdRbf: {
            grads.emplace_back(Eigen::VectorXd::Ones(n));  // d/d variance
            for (Eigen::Index d = 0; d < k.lengthscales.size(); ++d)
                grads.emplace_back(Eigen::VectorXd::Zero(n));
            break;
        }
        case KernelSpec::Type::Bias:
            grads.emplace_back(Eigen::VectorXd::Ones(n));
            break;
        case KernelSpec::Type::Sum:
            for (const auto& c : k.children) {
                auto g = grad_hyper_diag(c, A);
                grads.insert(grads.end(), std::make_move_iterator(g.begin()),
                             std::make_move_iterator(g.end()));
            }
            break;
    }
    return grads;
}

std::vector<Eigen::MatrixXd> grad_inputs(const KernelSpec& k, const Eigen::MatrixXd& A,
                                         const Eigen::MatrixXd& B) {
    if (A.cols() != B.cols()) throw ConfigError("grad_inputs: input column counts differ");
    const int q = static_cast<int>(A.cols());
    k.validate(q);
    const Eigen::Index n = A.rows(), m = B.rows();
    std::vector<Eigen::MatrixXd> grads(static_cast<std::size_t>(q),
                                       Eigen::MatrixXd::Zero(n, m));
    switch (k.type) {
        case KernelSpec::Type::ArdRbf: {
            const auto dims = effective_dims(k, q);
            parallel_for(n, [&](std::ptrdiff_t i) {
                for (Eigen::Index j = 0; j < m; ++j) {
                    double kij = k.variance * std::exp(-0.5 * ard_sqdist(k, dims, A, i, B, j));
                    for (std::size_t d = 0; d < dims.size(); ++d) {
                        double ell = k.lengthscales(static_cast<Eigen::Index>(d));
                        grads[static_cast<std::size_t>(dims[d])](i, j) +=
                            kij * (A(i, dims[d]) - B(j, dims[d])) / (ell * ell);
                    }
                }
            });
            break;
        }
        case KernelSpec::Type::Bias:
            break;  // constant in the inputs
        case KernelSpec::Type::Sum:
            for (const auto& c : k.children) {
                auto g = grad_inputs(c, A, B);
                for (std::size_t d = 0; d < grads.size(); ++d) grads[d] += g[d];
            }
            break;
    }
    return grads;
}

double jitter_for(const Eigen::MatrixXd& K) {
    return 1e-6 * K.diagonal().mean();
}

Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::MatrixXd& K) {
    Eigen::MatrixXd Kj = K;
    Kj.diagonal().array() += jitter_for(K);
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() != Eigen::Success)
        throw NumericalError("Cholesky factorization failed even with jitter");
    return llt;
}

}  // namespace cgp
