#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgp/chained_model.hpp"
#include "cgp/kernels.hpp"
#include "cgp/likelihoods.hpp"

namespace cgp {

// key = value file with [dotted.section] headers; '#' starts a comment.
// Parsed leniently, queried strictly: typed getters throw ConfigError with
// the full key path on bad values.
class IniFile {
  public:
    static IniFile parse_file(const std::string& path);
    static IniFile parse_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    bool has_section(const std::string& section) const;

    std::string get_string(const std::string& section, const std::string& key,
                           std::optional<std::string> fallback = {}) const;
    double get_double(const std::string& section, const std::string& key,
                      std::optional<double> fallback = {}) const;
    long get_long(const std::string& section, const std::string& key,
                  std::optional<long> fallback = {}) const;
    bool get_bool(const std::string& section, const std::string& key,
                  std::optional<bool> fallback = {}) const;
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const;
    std::vector<int> get_ints(const std::string& section, const std::string& key) const;

    // "section.key=value"
    void apply_override(const std::string& assignment);

  private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

// nested kernel description rooted at a section ("kernel.f"), children in
// subsections child0, child1, ...
KernelSpec kernel_from_config(const IniFile& ini, const std::string& section);

struct DataSpec {
    std::string csv;        // empty when a generator is used
    std::string generator;  // survival_synthetic | additive_poisson | beta_synthetic |
                            // motorcycle_standin | corrupt_motorcycle
    std::string y_column = "y";
    std::string delta_column = "delta";
    bool standardize_inputs = true;
    // generator knobs
    long n = 0;  // 0 -> generator default
    double censor_frac = 0.2;
    std::string base_csv;  // corrupt_motorcycle: real base data when supplied
    bool corrupt_standardize = true;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    Likelihood likelihood = Likelihood::het_gaussian();
    int inducing = 100;
    int quad_order = 20;
    int folds = 5;
    int restarts = 3;
    bool g_constant = false;

    std::optional<KernelSpec> kernel_f;
    std::optional<KernelSpec> kernel_g;

    TrainConfig train;
    DataSpec data;

    static ExperimentConfig from_ini(const IniFile& ini);
    static ExperimentConfig from_file(const std::string& path,
                                      const std::vector<std::string>& overrides = {});
    void validate_for_cv() const;  // folds >= 2 etc.
};

}  // namespace cgp
