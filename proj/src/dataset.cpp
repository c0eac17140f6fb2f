#include "cgp/dataset.hpp"

#include "cgp/errors.hpp"

namespace cgp {

Eigen::MatrixXd Dataset::InputTransform::apply(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != mean.size()) throw DataError("grid column count does not match training inputs");
    Eigen::MatrixXd out = raw;
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        out.col(c) = (out.col(c).array() - mean(c)) / scale(c);
    return out;
}

void Dataset::validate_shapes() const {
    if (X.rows() != y.size()) throw DataError("X and y row counts disagree");
    if (censored) {
        if (censored->size() != y.size()) throw DataError("delta and y row counts disagree");
        for (Eigen::Index i = 0; i < censored->size(); ++i)
            if ((*censored)(i) != 0 && (*censored)(i) != 1)
                throw DataError("delta entries must be 0 or 1", i);
    }
    if (truth && truth->values.rows() != y.size())
        throw DataError("truth rows disagree with y");
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
    Dataset out;
    out.name = name;
    out.seed = seed;
    out.input_transform = input_transform;
    const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
    out.X.resize(k, X.cols());
    out.y.resize(k);
    if (censored) out.censored = Eigen::VectorXi(k);
    if (truth) {
        out.truth = Truth{truth->names, Eigen::MatrixXd(k, truth->values.cols())};
    }
    for (Eigen::Index i = 0; i < k; ++i) {
        const int r = rows[static_cast<std::size_t>(i)];
        out.X.row(i) = X.row(r);
        out.y(i) = y(r);
        if (censored) (*out.censored)(i) = (*censored)(r);
        if (truth) out.truth->values.row(i) = truth->values.row(r);
    }
    return out;
}

void validate_for(const Likelihood& lik, const Dataset& data) {
    data.validate_shapes();
    if (data.censored && !lik.uses_censoring())
        throw DataError("dataset has a delta column but likelihood " + lik.name() +
                        " does not use censoring");
    std::string why;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        if (!lik.valid_datum(data.y(i), &why))
            throw DataError("row " + std::to_string(i) + ": " + why, i);
    }
}

}  // namespace cgp
