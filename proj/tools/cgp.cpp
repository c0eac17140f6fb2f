#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "cgp/checkpoint.hpp"
#include "cgp/csv.hpp"
#include "cgp/datagen.hpp"
#include "cgp/errors.hpp"
#include "cgp/harness.hpp"
#include "cgp/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace cgp;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    long seed = -1;
    std::string out_dir;
    bool serial = false;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* c = cmd->add_option("--config", args.config_path, "experiment config file");
    if (config_required) c->required();
    cmd->add_option("--override", args.overrides, "config override, section.key=value")
        ->take_all();
    cmd->add_option("--seed", args.seed, "override the config seed");
    cmd->add_option("--out", args.out_dir, "override the output directory");
    cmd->add_flag("--serial", args.serial, "run the serial reference path");
    cmd->add_option("--threads", args.threads, "OpenMP thread count (0 = default)");
}

ExperimentConfig resolve(const CommonArgs& args) {
    ExperimentConfig cfg = ExperimentConfig::from_file(args.config_path, args.overrides);
    if (args.seed >= 0) {
        cfg.seed = static_cast<std::uint64_t>(args.seed);
        cfg.train.seed = cfg.seed;
    }
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (args.serial) set_parallel_enabled(false);
#ifdef _OPENMP
    if (args.threads > 0) omp_set_num_threads(args.threads);
#endif
    fs::create_directories(cfg.out_dir);
    return cfg;
}

void print_trace_summary(const std::vector<TraceRow>& trace, int window) {
    if (trace.empty()) return;
    double acc = 0.0;
    int count = 0;
    for (const auto& r : trace) {
        acc += r.elbo;
        ++count;
        if (count == window || r.iteration == static_cast<int>(trace.size())) {
            std::cout << "iter " << r.iteration << " phase " << r.phase << " elbo(ma" << count
                      << ") " << acc / count << "\n";
            acc = 0.0;
            count = 0;
        }
    }
}

int cmd_fit(const CommonArgs& args) {
    ExperimentConfig cfg = resolve(args);
    const Dataset data = load_dataset(cfg);
    std::cout << "dataset " << data.name << ": n=" << data.n() << " q=" << data.q() << "\n";
    const FitOutcome fo = fit_with_restarts(cfg, data, cfg.seed);
    print_trace_summary(fo.trace, cfg.train.window);
    std::cout << "best restart " << fo.restart << ", training elbo " << fo.train_elbo << "\n";
    write_trace_csv(cfg.out_dir + "/fit_trace.csv", fo.trace);
    write_checkpoint(cfg.out_dir + "/checkpoint.json", fo.model, data.input_transform);
    std::cout << "wrote " << cfg.out_dir << "/fit_trace.csv and checkpoint.json\n";
    return 0;
}

int cmd_cv(const CommonArgs& args) {
    ExperimentConfig cfg = resolve(args);
    cfg.validate_for_cv();
    const Dataset data = load_dataset(cfg);
    const CvResult res = run_cv(cfg, data);
    write_cv_csv(cfg.out_dir, cfg, data, res);
    std::cout << "nlpd " << res.nlpd_mean << " +- " << res.nlpd_sd << " (sd across folds)\n"
              << "mae  " << res.mae_mean << " +- " << res.mae_sd << "\n"
              << "wrote " << cfg.out_dir << "/cv_metrics.csv and cv_folds.csv\n";
    return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& checkpoint_path,
                const std::string& grid_csv, const std::string& test_csv) {
    ExperimentConfig cfg = resolve(args);
    const std::string ck_path =
        checkpoint_path.empty() ? cfg.out_dir + "/checkpoint.json" : checkpoint_path;
    const Checkpoint ck = read_checkpoint(ck_path);

    if (grid_csv.empty() && test_csv.empty())
        throw ConfigError("predict needs --grid and/or --test");
    if (!grid_csv.empty()) {
        const CsvTable t = read_csv(grid_csv);
        emit_plot_data(ck.model, t.values, ck.transform, cfg.out_dir + "/plot_data.csv");
        std::cout << "wrote " << cfg.out_dir << "/plot_data.csv\n";
    }
    if (!test_csv.empty()) {
        DataSpec spec = cfg.data;
        spec.standardize_inputs = false;  // reuse the training transform instead
        Dataset test = ingest_csv(test_csv, ck.model.likelihood, spec);
        if (ck.transform) test.X = ck.transform->apply(test.X);
        write_predictions_csv(ck.model, test, cfg.out_dir + "/predictions.csv");
        std::cout << "nlpd " << nlpd(ck.model, test) << "\n"
                  << "wrote " << cfg.out_dir << "/predictions.csv\n";
    }
    return 0;
}

int cmd_datagen(const CommonArgs& args) {
    ExperimentConfig cfg = resolve(args);
    if (cfg.data.generator.empty()) throw ConfigError("datagen needs [data] generator = ...");
    ExperimentConfig raw = cfg;
    raw.data.standardize_inputs = false;  // emit generator-space coordinates
    const Dataset d = load_dataset(raw);
    const std::string base = cfg.out_dir + "/" + d.name;
    write_dataset_csv(d, base + ".csv", d.truth ? base + "_truth.csv" : "");
    std::cout << "wrote " << base << ".csv (n=" << d.n() << ")";
    if (d.truth) std::cout << " and " << base << "_truth.csv";
    std::cout << "\n";
    return 0;
}

int cmd_quadcheck(const CommonArgs& args) {
    ExperimentConfig cfg = resolve(args);
    IniFile ini = IniFile::parse_file(args.config_path);
    for (const auto& o : args.overrides) ini.apply_override(o);

    std::vector<int> h_list = {1, 2, 3, 5, 7, 10, 15, 20, 30, 50};
    std::vector<long> s_list = {10, 100, 1000, 10000};
    int reruns = 1000;
    if (ini.has("quadcheck", "h_list")) {
        h_list = ini.get_ints("quadcheck", "h_list");
    }
    if (ini.has("quadcheck", "s_list")) {
        s_list.clear();
        for (int s : ini.get_ints("quadcheck", "s_list")) s_list.push_back(s);
    }
    reruns = static_cast<int>(ini.get_long("quadcheck", "reruns", reruns));
    const double nu = ini.get_double("quadcheck", "nu", 4.0);

    const auto rows = bias_study(default_bias_positions(), h_list, s_list, reruns, cfg.seed, nu);
    write_bias_study_csv(cfg.out_dir + "/quadcheck.csv", rows);
    std::cout << "wrote " << cfg.out_dir << "/quadcheck.csv (" << rows.size() << " rows)\n";
    return 0;
}

int cmd_gradcheck(const CommonArgs& args, bool all_families) {
    ExperimentConfig cfg = resolve(args);
    std::vector<Likelihood> liks;
    if (all_families) {
        liks = {Likelihood::het_gaussian(),       Likelihood::het_student_t(),
                Likelihood::beta(),               Likelihood::log_logistic_survival(),
                Likelihood::additive_poisson(),   Likelihood::multiplicative_poisson()};
    } else {
        liks = {cfg.likelihood};
    }
    bool ok = true;
    for (const auto& lik : liks) {
        std::cout << lik.name() << "\n";
        for (const auto& [block, err] : gradient_check(lik, cfg.seed)) {
            const bool pass = err < 1e-4;
            ok = ok && pass;
            std::cout << "  " << block << ": max rel err " << err << (pass ? "" : "  <-- FAIL")
                      << "\n";
        }
    }
    if (!ok) throw NumericalError("gradient check failed");
    std::cout << "all gradient blocks within 1e-4\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chained sparse variational GP models"};
    app.require_subcommand(1);

    CommonArgs fit_args, cv_args, pred_args, gen_args, quad_args, grad_args;
    std::string checkpoint_path, grid_csv, test_csv;
    bool grad_all = false;

    add_common(app.add_subcommand("fit", "fit a model and write a checkpoint"), fit_args);
    add_common(app.add_subcommand("cv", "cross-validated NLPD/MAE"), cv_args);
    auto* pred = app.add_subcommand("predict", "predict from a checkpoint");
    add_common(pred, pred_args);
    pred->add_option("--checkpoint", checkpoint_path, "checkpoint path (default <out>/checkpoint.json)");
    pred->add_option("--grid", grid_csv, "input-only CSV; emits plot data");
    pred->add_option("--test", test_csv, "labeled CSV; emits per-point predictions");
    add_common(app.add_subcommand("datagen", "write a synthetic dataset"), gen_args);
    add_common(app.add_subcommand("quadcheck", "quadrature-vs-MC bias table"), quad_args);
    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(grad, grad_args);
    grad->add_flag("--all", grad_all, "check every likelihood family");

    try {
        app.parse(argc, argv);
        if (app.got_subcommand("fit")) return cmd_fit(fit_args);
        if (app.got_subcommand("cv")) return cmd_cv(cv_args);
        if (app.got_subcommand("predict"))
            return cmd_predict(pred_args, checkpoint_path, grid_csv, test_csv);
        if (app.got_subcommand("datagen")) return cmd_datagen(gen_args);
        if (app.got_subcommand("quadcheck")) return cmd_quadcheck(quad_args);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(grad_args, grad_all);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const FitAbort& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
