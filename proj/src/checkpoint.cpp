#include "cgp/checkpoint.hpp"

#include <fstream>
#include <json.hpp>

#include "cgp/errors.hpp"

namespace cgp {

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
}

json mat_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd mat_from_json(const json& rows) {
    const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index nc = nr > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(nr, nc);
    for (Eigen::Index r = 0; r < nr; ++r)
        for (Eigen::Index c = 0; c < nc; ++c)
            m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    return m;
}

json kernel_to_json(const KernelSpec& k) {
    json j;
    switch (k.type) {
        case KernelSpec::Type::ArdRbf:
            j["type"] = "ard_rbf";
            j["variance"] = k.variance;
            j["lengthscales"] = vec_to_json(k.lengthscales);
            break;
        case KernelSpec::Type::Bias:
            j["type"] = "bias";
            j["variance"] = k.variance;
            break;
        case KernelSpec::Type::Sum: {
            j["type"] = "sum";
            json ch = json::array();
            for (const auto& c : k.children) ch.push_back(kernel_to_json(c));
            j["children"] = std::move(ch);
            break;
        }
    }
    if (!k.active_dims.empty()) j["active_dims"] = k.active_dims;
    return j;
}

KernelSpec kernel_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    KernelSpec k;
    if (type == "ard_rbf") {
        k = KernelSpec::ard_rbf(j.at("variance").get<double>(),
                                vec_from_json(j.at("lengthscales")));
    } else if (type == "bias") {
        k = KernelSpec::bias(j.at("variance").get<double>());
    } else if (type == "sum") {
        std::vector<KernelSpec> children;
        for (const auto& c : j.at("children")) children.push_back(kernel_from_json(c));
        k = KernelSpec::sum(std::move(children));
    } else {
        throw DataError("checkpoint: unknown kernel type " + type);
    }
    if (j.contains("active_dims")) k.active_dims = j.at("active_dims").get<std::vector<int>>();
    return k;
}

// packed lower triangle, row-major, diagonal raw (positivity is a model
// invariant, not a storage transform)
json packed_lower(const Eigen::MatrixXd& L) {
    json a = json::array();
    for (Eigen::Index i = 0; i < L.rows(); ++i)
        for (Eigen::Index j = 0; j <= i; ++j) a.push_back(L(i, j));
    return a;
}

Eigen::MatrixXd unpack_lower(const json& a, Eigen::Index m) {
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) L(i, j) = a.at(at++).get<double>();
    return L;
}

}  // namespace

void write_checkpoint(const std::string& path, const ChainedModel& model,
                      const std::optional<Dataset::InputTransform>& transform) {
    model.validate();
    json j;
    j["format"] = "cgp-checkpoint";
    j["version"] = kCheckpointVersion;
    j["quad_order"] = model.rule.order;
    j["likelihood"] = {{"family", model.likelihood.name()},
                       {"nu", model.likelihood.nu},
                       {"nu_trainable", model.likelihood.nu_trainable}};
    json lats = json::array();
    for (const auto& lat : model.latents) {
        json l;
        if (lat.kind == Latent::Kind::Gp) {
            l["kind"] = "gp";
            l["Z"] = mat_to_json(lat.gp.Z);
            l["mu_u"] = vec_to_json(lat.gp.mu_u);
            l["L_u_packed"] = packed_lower(lat.gp.L_u);
            l["kernel"] = kernel_to_json(lat.gp.kernel);
            l["prior_mean"] = lat.gp.prior_mean;
        } else {
            l["kind"] = "constant";
            l["value"] = lat.constant;
            l["trainable"] = lat.constant_trainable;
        }
        lats.push_back(std::move(l));
    }
    j["latents"] = std::move(lats);
    if (transform) {
        j["input_transform"] = {{"mean", vec_to_json(transform->mean)},
                                {"scale", vec_to_json(transform->scale)}};
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out << j.dump(2) << "\n";
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError("checkpoint parse failure: " + std::string(e.what()));
    }
    if (j.value("format", "") != std::string("cgp-checkpoint"))
        throw DataError("not a cgp checkpoint: " + path);
    if (j.value("version", -1) != kCheckpointVersion)
        throw DataError("unsupported checkpoint version in " + path);

    Checkpoint ck;
    ck.model.rule = gh_rule(j.at("quad_order").get<int>());
    const auto& jl = j.at("likelihood");
    ck.model.likelihood = Likelihood::from_name(jl.at("family").get<std::string>());
    ck.model.likelihood.nu = jl.at("nu").get<double>();
    ck.model.likelihood.nu_trainable = jl.at("nu_trainable").get<bool>();

    for (const auto& l : j.at("latents")) {
        if (l.at("kind").get<std::string>() == "gp") {
            LatentGP gp;
            gp.Z = mat_from_json(l.at("Z"));
            gp.mu_u = vec_from_json(l.at("mu_u"));
            gp.L_u = unpack_lower(l.at("L_u_packed"), gp.Z.rows());
            gp.kernel = kernel_from_json(l.at("kernel"));
            gp.prior_mean = l.at("prior_mean").get<double>();
            ck.model.latents.push_back(Latent::gp_latent(std::move(gp)));
        } else {
            ck.model.latents.push_back(
                Latent::constant_latent(l.at("value").get<double>(), l.at("trainable").get<bool>()));
        }
    }
    if (j.contains("input_transform")) {
        Dataset::InputTransform t;
        t.mean = vec_from_json(j.at("input_transform").at("mean"));
        t.scale = vec_from_json(j.at("input_transform").at("scale"));
        ck.transform = std::move(t);
    }
    ck.model.validate();
    return ck;
}

}  // namespace cgp
