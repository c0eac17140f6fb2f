#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace cgp {

// Composable covariance function: ARD exponentiated-quadratic, constant bias,
// or a sum of children restricted to (possibly overlapping) input-dimension
// subsets. All variances and lengthscales are strictly positive; the
// optimizer works on log(hypers) to keep them so.
struct KernelSpec {
    enum class Type { ArdRbf, Bias, Sum };

    Type type = Type::ArdRbf;
    double variance = 1.0;             // ArdRbf, Bias
    Eigen::VectorXd lengthscales;      // ArdRbf; one per active dimension
    std::vector<int> active_dims;      // empty means all input dimensions
    std::vector<KernelSpec> children;  // Sum

    static KernelSpec ard_rbf(double variance, Eigen::VectorXd lengthscales,
                              std::vector<int> active_dims = {});
    static KernelSpec bias(double variance);
    static KernelSpec sum(std::vector<KernelSpec> children);

    // throws ConfigError on non-positive hypers or active dims outside [0, q)
    void validate(int input_dim) const;

    // Flat hyperparameter vector in positive space, depth-first:
    // ArdRbf -> [variance, ls...], Bias -> [variance], Sum -> children concat.
    int hyper_count() const;
    Eigen::VectorXd hypers() const;
    void set_hypers(const Eigen::VectorXd& h);
    std::vector<std::string> hyper_names() const;
    // true for hypers a config may pin during fitting (lengthscale entries)
    std::vector<bool> hyper_is_lengthscale() const;
};

// entry (i,j) = k(A_i, B_j)
Eigen::MatrixXd gram(const KernelSpec& k, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// diag of gram(k, A, A) without forming the matrix
Eigen::VectorXd gram_diag(const KernelSpec& k, const Eigen::MatrixXd& A);

// one matrix per hyperparameter, entry (i,j) = d k(A_i,B_j) / d theta
std::vector<Eigen::MatrixXd> grad_hyper(const KernelSpec& k, const Eigen::MatrixXd& A,
                                        const Eigen::MatrixXd& B);

// one vector per hyperparameter, element i = d k(A_i,A_i) / d theta
std::vector<Eigen::VectorXd> grad_hyper_diag(const KernelSpec& k, const Eigen::MatrixXd& A);

// one matrix per input dimension d, entry (i,j) = d k(A_i, B_j) / d B(j,d)
std::vector<Eigen::MatrixXd> grad_inputs(const KernelSpec& k, const Eigen::MatrixXd& A,
                                         const Eigen::MatrixXd& B);

// jitter policy used before every Cholesky: 1e-6 x mean diagonal
double jitter_for(const Eigen::MatrixXd& K);

// LLT of K + jitter*I; throws NumericalError if it still fails
Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::MatrixXd& K);

}  // namespace cgp
