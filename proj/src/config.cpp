#include "cgp/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cgp/errors.hpp"

namespace cgp {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::stringstream ss(s);
    while (ss >> tok) {
        // allow comma-separated lists too
        std::stringstream inner(tok);
        std::string part;
        while (std::getline(inner, part, ','))
            if (!part.empty()) out.push_back(part);
    }
    return out;
}

}  // namespace

IniFile IniFile::parse_string(const std::string& text) {
    IniFile ini;
    std::string section;
    std::stringstream ss(text);
    std::string line;
    long lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            ini.sections_[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        ini.sections_[section][key] = value;
    }
    return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

bool IniFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

bool IniFile::has_section(const std::string& section) const {
    return sections_.count(section) > 0;
}

std::string IniFile::get_string(const std::string& section, const std::string& key,
                                std::optional<std::string> fallback) const {
    auto s = sections_.find(section);
    if (s != sections_.end()) {
        auto k = s->second.find(key);
        if (k != s->second.end()) return k->second;
    }
    if (fallback) return *fallback;
    throw ConfigError("missing config key: [" + section + "] " + key);
}

double IniFile::get_double(const std::string& section, const std::string& key,
                           std::optional<double> fallback) const {
    if (!has(section, key)) {
        if (fallback) return *fallback;
        throw ConfigError("missing config key: [" + section + "] " + key);
    }
    const std::string v = get_string(section, key);
    try {
        std::size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config value [" + section + "] " + key + " = '" + v +
                          "' is not a number");
    }
}

long IniFile::get_long(const std::string& section, const std::string& key,
                       std::optional<long> fallback) const {
    if (!has(section, key)) {
        if (fallback) return *fallback;
        throw ConfigError("missing config key: [" + section + "] " + key);
    }
    const std::string v = get_string(section, key);
    try {
        std::size_t used = 0;
        long x = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config value [" + section + "] " + key + " = '" + v +
                          "' is not an integer");
    }
}

bool IniFile::get_bool(const std::string& section, const std::string& key,
                       std::optional<bool> fallback) const {
    if (!has(section, key)) {
        if (fallback) return *fallback;
        throw ConfigError("missing config key: [" + section + "] " + key);
    }
    std::string v = get_string(section, key);
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config value [" + section + "] " + key + " = '" + v + "' is not a boolean");
}

std::vector<double> IniFile::get_doubles(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const auto& t : tokens(get_string(section, key))) {
        try {
            out.push_back(std::stod(t));
        } catch (const std::exception&) {
            throw ConfigError("config value [" + section + "] " + key + ": '" + t +
                              "' is not a number");
        }
    }
    return out;
}

std::vector<int> IniFile::get_ints(const std::string& section, const std::string& key) const {
    std::vector<int> out;
    for (double x : get_doubles(section, key)) out.push_back(static_cast<int>(x));
    return out;
}

void IniFile::apply_override(const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like section.key=value: " + assignment);
    const std::string path = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const std::size_t dot = path.rfind('.');
    if (dot == std::string::npos)
        throw ConfigError("override key must be section.key: " + assignment);
    sections_[path.substr(0, dot)][path.substr(dot + 1)] = value;
}

KernelSpec kernel_from_config(const IniFile& ini, const std::string& section) {
    if (!ini.has_section(section)) throw ConfigError("missing kernel section [" + section + "]");
    const std::string type = ini.get_string(section, "type");
    std::vector<int> dims;
    if (ini.has(section, "active_dims")) dims = ini.get_ints(section, "active_dims");

    if (type == "ard_rbf") {
        const auto ls = ini.get_doubles(section, "lengthscales");
        Eigen::VectorXd l(static_cast<Eigen::Index>(ls.size()));
        for (std::size_t i = 0; i < ls.size(); ++i) l(static_cast<Eigen::Index>(i)) = ls[i];
        return KernelSpec::ard_rbf(ini.get_double(section, "variance", 1.0), l, dims);
    }
    if (type == "bias") {
        auto k = KernelSpec::bias(ini.get_double(section, "variance", 1.0));
        k.active_dims = dims;
        return k;
    }
    if (type == "sum") {
        std::vector<KernelSpec> children;
        for (int c = 0;; ++c) {
            const std::string child = section + ".child" + std::to_string(c);
            if (!ini.has_section(child)) break;
            children.push_back(kernel_from_config(ini, child));
        }
        if (children.empty())
            throw ConfigError("sum kernel [" + section + "] has no child sections");
        auto k = KernelSpec::sum(std::move(children));
        k.active_dims = dims;
        return k;
    }
    throw ConfigError("unknown kernel type '" + type + "' in [" + section + "]");
}

ExperimentConfig ExperimentConfig::from_ini(const IniFile& ini) {
    ExperimentConfig cfg;
    cfg.name = ini.get_string("experiment", "name", std::string("experiment"));
    cfg.seed = static_cast<std::uint64_t>(ini.get_long("experiment", "seed", 0));
    cfg.out_dir = ini.get_string("experiment", "out", std::string("out"));
    cfg.likelihood = Likelihood::from_name(
        ini.get_string("experiment", "likelihood", std::string("het_gaussian")));
    if (cfg.likelihood.family == LikelihoodFamily::HetStudentT) {
        cfg.likelihood.nu = ini.get_double("experiment", "nu", 4.0);
        cfg.likelihood.nu_trainable = ini.get_bool("experiment", "nu_trainable", true);
        if (!(cfg.likelihood.nu > 0.0)) throw ConfigError("nu must be positive");
    }
    cfg.inducing = static_cast<int>(ini.get_long("experiment", "inducing", 100));
    cfg.quad_order = static_cast<int>(ini.get_long("experiment", "quad_order", 20));
    cfg.folds = static_cast<int>(ini.get_long("experiment", "folds", 5));
    cfg.restarts = static_cast<int>(ini.get_long("experiment", "restarts", 3));
    cfg.g_constant = ini.get_bool("model", "g_constant", false);
    if (cfg.inducing < 1) throw ConfigError("inducing must be >= 1");
    if (cfg.restarts < 1) throw ConfigError("restarts must be >= 1");

    if (ini.has_section("kernel.f")) cfg.kernel_f = kernel_from_config(ini, "kernel.f");
    if (ini.has_section("kernel.g")) cfg.kernel_g = kernel_from_config(ini, "kernel.g");

    cfg.train.batch_size = static_cast<int>(ini.get_long("train", "batch", 256));
    const std::string opt = ini.get_string("train", "optimizer", std::string("rmsprop"));
    if (opt == "rmsprop") cfg.train.optimizer = TrainConfig::Optimizer::Rmsprop;
    else if (opt == "adagrad") cfg.train.optimizer = TrainConfig::Optimizer::Adagrad;
    else throw ConfigError("unknown optimizer '" + opt + "' (rmsprop|adagrad)");
    cfg.train.rate = ini.get_double("train", "rate", 1e-3);
    cfg.train.iters = static_cast<int>(ini.get_long("train", "iters", 2000));
    cfg.train.fixed_iters = static_cast<int>(ini.get_long("train", "fixed_iters", 100));
    cfg.train.window = static_cast<int>(ini.get_long("train", "window", 50));
    cfg.train.fix_lengthscales = ini.get_bool("train", "fix_lengthscales", false);
    cfg.train.seed = cfg.seed;

    cfg.data.csv = ini.get_string("data", "csv", std::string(""));
    cfg.data.generator = ini.get_string("data", "generator", std::string(""));
    cfg.data.y_column = ini.get_string("data", "y", std::string("y"));
    cfg.data.delta_column = ini.get_string("data", "delta", std::string("delta"));
    cfg.data.standardize_inputs = ini.get_bool("data", "standardize_inputs", true);
    cfg.data.n = ini.get_long("data", "n", 0);
    cfg.data.censor_frac = ini.get_double("data", "censor_frac", 0.2);
    cfg.data.base_csv = ini.get_string("data", "base_csv", std::string(""));
    cfg.data.corrupt_standardize = ini.get_bool("data", "corrupt_standardize", true);
    if (cfg.data.csv.empty() == cfg.data.generator.empty())
        throw ConfigError("[data] needs exactly one of csv or generator");
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path,
                                             const std::vector<std::string>& overrides) {
    IniFile ini = IniFile::parse_file(path);
    for (const auto& o : overrides) ini.apply_override(o);
    return from_ini(ini);
}

void ExperimentConfig::validate_for_cv() const {
    if (folds < 2) throw ConfigError("cv needs folds >= 2");
}

}  // namespace cgp
