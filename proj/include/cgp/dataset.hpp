#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgp/likelihoods.hpp"

namespace cgp {

// Inputs X (n x q), targets y (n), optional censoring indicators delta, plus
// generator metadata. truth carries the latent functions behind synthetic
// data so recovery can be scored.
struct Dataset {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::optional<Eigen::VectorXi> censored;  // delta, 1 = censored

    std::string name;
    std::uint64_t seed = 0;

    struct Truth {
        std::vector<std::string> names;  // one per column
        Eigen::MatrixXd values;          // n x |names|
    };
    std::optional<Truth> truth;
    std::vector<long> corrupted;  // indices touched by the corruption generator

    // per-column input standardization applied at ingest, kept for mapping
    // prediction grids into model space
    struct InputTransform {
        Eigen::VectorXd mean;
        Eigen::VectorXd scale;
        Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
    };
    std::optional<InputTransform> input_transform;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index q() const { return X.cols(); }
    int censor_flag(Eigen::Index i) const {
        return censored ? (*censored)(i) : 0;
    }

    // row-count agreement, delta only in {0,1}
    void validate_shapes() const;
    // restrict rows to the given indices, keeping metadata columns aligned
    Dataset subset(const std::vector<int>& rows) const;
};

// Domain-validate every target against the likelihood; throws DataError with
// the offending row. Censoring indicators are required to be absent unless
// the family uses them.
void validate_for(const Likelihood& lik, const Dataset& data);

}  // namespace cgp
