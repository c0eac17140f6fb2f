#include "cgp/harness.hpp"

#include <algorithm>
#include <cmath>

#include "cgp/csv.hpp"
#include "cgp/datagen.hpp"
#include "cgp/errors.hpp"
#include "cgp/parallel.hpp"
#include "cgp/rng.hpp"

namespace cgp {

Dataset ingest_csv(const std::string& path, const Likelihood& lik, const DataSpec& spec) {
    const CsvTable t = read_csv(path);
    const int yc = t.column(spec.y_column);
    if (yc < 0) throw DataError(path + ": missing target column '" + spec.y_column + "'");
    const int dc = t.column(spec.delta_column);
    if (dc >= 0 && !lik.uses_censoring())
        throw DataError(path + ": delta column is only accepted with a survival likelihood");

    Dataset d;
    d.name = path;
    std::vector<int> xcols;
    for (int c = 0; c < static_cast<int>(t.header.size()); ++c)
        if (c != yc && c != dc) xcols.push_back(c);
    if (xcols.empty()) throw DataError(path + ": no input columns");

    const Eigen::Index n = t.values.rows();
    d.X.resize(n, static_cast<Eigen::Index>(xcols.size()));
    for (std::size_t j = 0; j < xcols.size(); ++j) d.X.col(static_cast<Eigen::Index>(j)) = t.values.col(xcols[j]);
    d.y = t.values.col(yc);
    if (dc >= 0) {
        Eigen::VectorXi delta(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = t.values(i, dc);
            if (v != 0.0 && v != 1.0)
                throw DataError(path + ": delta must be 0 or 1 at row " + std::to_string(i), i);
            delta(i) = static_cast<int>(v);
        }
        d.censored = delta;
    }

    if (spec.standardize_inputs) {
        Dataset::InputTransform tr;
        tr.mean.resize(d.X.cols());
        tr.scale.resize(d.X.cols());
        for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
            tr.mean(c) = d.X.col(c).mean();
            double sd = std::sqrt((d.X.col(c).array() - tr.mean(c)).square().sum() /
                                  std::max<double>(1.0, n - 1));
            tr.scale(c) = sd > 0.0 ? sd : 1.0;
            d.X.col(c) = (d.X.col(c).array() - tr.mean(c)) / tr.scale(c);
        }
        d.input_transform = tr;
    }

    validate_for(lik, d);
    return d;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
    if (!cfg.data.csv.empty()) return ingest_csv(cfg.data.csv, cfg.likelihood, cfg.data);

    const std::string& gen = cfg.data.generator;
    const long n = cfg.data.n;
    Dataset d;
    if (gen == "survival_synthetic") {
        d = gen_survival_synthetic(n > 0 ? static_cast<int>(n) : 1000, cfg.data.censor_frac,
                                   cfg.seed);
    } else if (gen == "additive_poisson") {
        d = gen_additive_poisson_default(n > 0 ? static_cast<int>(n) : 350, cfg.seed);
    } else if (gen == "beta_synthetic") {
        d = gen_beta_synthetic_default(n > 0 ? static_cast<int>(n) : 500, cfg.seed);
    } else if (gen == "motorcycle_standin") {
        d = motorcycle_standin(cfg.seed);
    } else if (gen == "corrupt_motorcycle") {
        Dataset base;
        if (!cfg.data.base_csv.empty()) {
            DataSpec raw = cfg.data;
            raw.standardize_inputs = false;  // corrupt first, standardize below
            base = ingest_csv(cfg.data.base_csv, Likelihood::het_gaussian(), raw);
        } else {
            base = motorcycle_standin(cfg.seed);
        }
        if (base.q() != 1) throw DataError("corrupt_motorcycle expects 1-D inputs");
        d = gen_corrupt_motorcycle(base, cfg.seed, cfg.data.corrupt_standardize);
    } else {
        throw ConfigError("unknown data generator: " + gen);
    }

    if (cfg.data.standardize_inputs) {
        Dataset::InputTransform tr;
        tr.mean.resize(d.X.cols());
        tr.scale.resize(d.X.cols());
        for (Eigen::Index c = 0; c < d.X.cols(); ++c) {
            tr.mean(c) = d.X.col(c).mean();
            double sd = std::sqrt((d.X.col(c).array() - tr.mean(c)).square().sum() /
                                  std::max<double>(1.0, d.n() - 1));
            tr.scale(c) = sd > 0.0 ? sd : 1.0;
            d.X.col(c) = (d.X.col(c).array() - tr.mean(c)) / tr.scale(c);
        }
        d.input_transform = tr;
    }
    validate_for(cfg.likelihood, d);
    return d;
}

std::vector<std::vector<int>> fold_split(Eigen::Index n, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("fold_split needs folds >= 2");
    if (n < folds) throw DataError("fewer rows than folds");
    std::vector<int> idx = all_indices(n);
    Rng rng(Rng::derive(seed, 0xF01D));
    rng.shuffle(idx);
    std::vector<std::vector<int>> out(static_cast<std::size_t>(folds));
    const Eigen::Index base = n / folds, extra = n % folds;
    std::size_t at = 0;
    for (int f = 0; f < folds; ++f) {
        const Eigen::Index size = base + (f < extra ? 1 : 0);
        for (Eigen::Index k = 0; k < size; ++k) out[static_cast<std::size_t>(f)].push_back(idx[at++]);
        std::sort(out[static_cast<std::size_t>(f)].begin(), out[static_cast<std::size_t>(f)].end());
    }
    return out;
}

namespace {

struct PointwisePredictions {
    LatentPredictions latents;
    Eigen::VectorXd lpd;  // given targets
};

PointwisePredictions pointwise(const ChainedModel& model, const Dataset& test) {
    PointwisePredictions out;
    out.latents = predict_latents(model, test.X);
    const Eigen::Index n = test.n();
    out.lpd.resize(n);
    const auto& L = out.latents;
    parallel_for(n, [&](std::ptrdiff_t i) {
        out.lpd(i) = predictive_log_density(model.likelihood, test.y(i), test.censor_flag(i),
                                            L.f.mean(i), L.f.var(i), L.g.mean(i), L.g.var(i),
                                            model.rule);
    });
    return out;
}

double sd_across(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double mu = 0.0;
    for (double x : xs) mu += x;
    mu /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

double nlpd(const ChainedModel& model, const Dataset& test) {
    validate_for(model.likelihood, test);
    if (test.n() == 0) throw DataError("nlpd needs a non-empty test set");
    return -pointwise(model, test).lpd.mean();
}

double mae(const ChainedModel& model, const Dataset& test) {
    validate_for(model.likelihood, test);
    const LatentPredictions L = predict_latents(model, test.X);
    const bool use_median = model.likelihood.uses_censoring();
    const Eigen::Index n = test.n();
    Eigen::VectorXd err(n);
    parallel_for(n, [&](std::ptrdiff_t i) {
        double point;
        if (use_median) {
            point = predictive_quantile(model.likelihood, 0.5, L.f.mean(i), L.f.var(i),
                                        L.g.mean(i), L.g.var(i), model.rule);
        } else {
            const auto m = predictive_moments(model.likelihood, L.f.mean(i), L.f.var(i),
                                              L.g.mean(i), L.g.var(i), model.rule);
            point = m.mean ? *m.mean
                           : predictive_quantile(model.likelihood, 0.5, L.f.mean(i), L.f.var(i),
                                                 L.g.mean(i), L.g.var(i), model.rule);
        }
        err(i) = std::abs(test.y(i) - point);
    });
    return err.mean();
}

FitOutcome fit_with_restarts(const ExperimentConfig& cfg, const Dataset& data,
                             std::uint64_t seed) {
    FitOutcome best;
    bool have = false;
    for (int r = 0; r < cfg.restarts; ++r) {
        ModelInit init;
        init.inducing = cfg.inducing;
        init.quad_order = cfg.quad_order;
        init.g_constant = cfg.g_constant;
        if (cfg.kernel_f) {
            init.kernel_f = *cfg.kernel_f;
            init.kernel_f_set = true;
        }
        if (cfg.kernel_g) {
            init.kernel_g = *cfg.kernel_g;
            init.kernel_g_set = true;
        }
        init.seed = Rng::derive(seed, 0x100 + static_cast<std::uint64_t>(r));

        ChainedModel model = init_model(data, cfg.likelihood, init);
        TrainConfig tc = cfg.train;
        tc.seed = Rng::derive(seed, 0x200 + static_cast<std::uint64_t>(r));
        std::vector<TraceRow> trace = fit(model, data, tc);
        const double train_elbo = elbo(model, data, all_indices(data.n()));
        if (!have || train_elbo > best.train_elbo) {
            best.model = std::move(model);
            best.trace = std::move(trace);
            best.train_elbo = train_elbo;
            best.restart = r;
            have = true;
        }
    }
    return best;
}

CvResult run_cv(const ExperimentConfig& cfg, const Dataset& data) {
    cfg.validate_for_cv();
    const auto folds = fold_split(data.n(), cfg.folds, cfg.seed);
    CvResult result;
    std::vector<double> nlpds, maes;
    for (int f = 0; f < cfg.folds; ++f) {
        const auto& test_rows = folds[static_cast<std::size_t>(f)];
        std::vector<int> train_rows;
        for (int g = 0; g < cfg.folds; ++g)
            if (g != f)
                train_rows.insert(train_rows.end(), folds[static_cast<std::size_t>(g)].begin(),
                                  folds[static_cast<std::size_t>(g)].end());
        std::sort(train_rows.begin(), train_rows.end());

        const Dataset train = data.subset(train_rows);
        const Dataset test = data.subset(test_rows);
        const FitOutcome fo =
            fit_with_restarts(cfg, train, Rng::derive(cfg.seed, 0x300 + static_cast<std::uint64_t>(f)));

        CvFoldRow row;
        row.fold = f;
        row.restart = fo.restart;
        row.train_elbo = fo.train_elbo;
        row.nlpd = nlpd(fo.model, test);
        row.mae = mae(fo.model, test);
        result.folds.push_back(row);
        nlpds.push_back(row.nlpd);
        maes.push_back(row.mae);
    }
    result.nlpd_mean = 0.0;
    result.mae_mean = 0.0;
    for (const auto& r : result.folds) {
        result.nlpd_mean += r.nlpd;
        result.mae_mean += r.mae;
    }
    result.nlpd_mean /= static_cast<double>(cfg.folds);
    result.mae_mean /= static_cast<double>(cfg.folds);
    result.nlpd_sd = sd_across(nlpds);
    result.mae_sd = sd_across(maes);
    return result;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    CsvWriter w(path, {"iteration", "elbo", "phase"});
    for (const auto& r : trace)
        w.row({std::to_string(r.iteration), format_double(r.elbo), std::to_string(r.phase)});
}

void write_cv_csv(const std::string& dir, const ExperimentConfig& cfg, const Dataset& data,
                  const CvResult& result) {
    {
        CsvWriter w(dir + "/cv_metrics.csv",
                    {"dataset", "likelihood", "folds", "restarts", "inducing", "nlpd_mean",
                     "nlpd_sd_across_folds", "mae_mean", "mae_sd_across_folds"});
        w.row({data.name, cfg.likelihood.name(), std::to_string(cfg.folds),
               std::to_string(cfg.restarts), std::to_string(cfg.inducing),
               format_double(result.nlpd_mean), format_double(result.nlpd_sd),
               format_double(result.mae_mean), format_double(result.mae_sd)});
    }
    {
        CsvWriter w(dir + "/cv_folds.csv", {"fold", "restart", "train_elbo", "nlpd", "mae"});
        for (const auto& r : result.folds)
            w.row({std::to_string(r.fold), std::to_string(r.restart), format_double(r.train_elbo),
                   format_double(r.nlpd), format_double(r.mae)});
    }
}

void emit_plot_data(const ChainedModel& model, const Eigen::MatrixXd& grid_raw,
                    const std::optional<Dataset::InputTransform>& transform,
                    const std::string& path) {
    const Eigen::MatrixXd grid = transform ? transform->apply(grid_raw) : grid_raw;
    if (grid.cols() != model.input_dim() && model.input_dim() > 0)
        throw DataError("plot grid dimension does not match the model inputs");
    const LatentPredictions L = predict_latents(model, grid);

    const Eigen::Index n = grid.rows();
    Eigen::MatrixXd quant(n, 3);
    parallel_for(n, [&](std::ptrdiff_t i) {
        for (int k = 0; k < 3; ++k) {
            const double p = k == 0 ? 0.05 : k == 1 ? 0.5 : 0.95;
            quant(i, k) = predictive_quantile(model.likelihood, p, L.f.mean(i), L.f.var(i),
                                              L.g.mean(i), L.g.var(i), model.rule);
        }
    });

    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < grid_raw.cols(); ++c) header.push_back("x" + std::to_string(c));
    for (const char* s : {"f_mean", "f_var", "g_mean", "g_var", "q05", "q50", "q95"})
        header.push_back(s);
    CsvWriter w(path, header);
    std::vector<std::string> cells;
    for (Eigen::Index i = 0; i < n; ++i) {
        cells.clear();
        for (Eigen::Index c = 0; c < grid_raw.cols(); ++c)
            cells.push_back(format_double(grid_raw(i, c)));
        cells.push_back(format_double(L.f.mean(i)));
        cells.push_back(format_double(L.f.var(i)));
        cells.push_back(format_double(L.g.mean(i)));
        cells.push_back(format_double(L.g.var(i)));
        for (int k = 0; k < 3; ++k) cells.push_back(format_double(quant(i, k)));
        w.row(cells);
    }
}

void write_predictions_csv(const ChainedModel& model, const Dataset& test,
                           const std::string& path) {
    validate_for(model.likelihood, test);
    const PointwisePredictions P = pointwise(model, test);
    CsvWriter w(path, {"y", "delta", "f_mean", "f_var", "g_mean", "g_var",
                       "predictive_log_density", "pred_mean", "pred_variance"});
    for (Eigen::Index i = 0; i < test.n(); ++i) {
        const auto m = predictive_moments(model.likelihood, P.latents.f.mean(i),
                                          P.latents.f.var(i), P.latents.g.mean(i),
                                          P.latents.g.var(i), model.rule);
        w.row({format_double(test.y(i)), std::to_string(test.censor_flag(i)),
               format_double(P.latents.f.mean(i)), format_double(P.latents.f.var(i)),
               format_double(P.latents.g.mean(i)), format_double(P.latents.g.var(i)),
               format_double(P.lpd(i)), m.mean ? format_double(*m.mean) : "",
               m.variance ? format_double(*m.variance) : ""});
    }
}

void write_dataset_csv(const Dataset& data, const std::string& path,
                       const std::string& truth_path) {
    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < data.q(); ++c) header.push_back("x" + std::to_string(c));
    header.push_back("y");
    if (data.censored) header.push_back("delta");
    CsvWriter w(path, header);
    std::vector<std::string> cells;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        cells.clear();
        for (Eigen::Index c = 0; c < data.q(); ++c) cells.push_back(format_double(data.X(i, c)));
        cells.push_back(format_double(data.y(i)));
        if (data.censored) cells.push_back(std::to_string((*data.censored)(i)));
        w.row(cells);
    }
    if (!truth_path.empty() && data.truth) {
        std::vector<std::string> th;
        for (Eigen::Index c = 0; c < data.q(); ++c) th.push_back("x" + std::to_string(c));
        for (const auto& name : data.truth->names) th.push_back(name);
        CsvWriter tw(truth_path, th);
        for (Eigen::Index i = 0; i < data.n(); ++i) {
            cells.clear();
            for (Eigen::Index c = 0; c < data.q(); ++c) cells.push_back(format_double(data.X(i, c)));
            for (Eigen::Index c = 0; c < data.truth->values.cols(); ++c)
                cells.push_back(format_double(data.truth->values(i, c)));
            tw.row(cells);
        }
    }
}

void write_bias_study_csv(const std::string& path, const std::vector<BiasRow>& rows) {
    CsvWriter w(path, {"position_label", "method", "order_or_samples", "abs_error"});
    for (const auto& r : rows)
        w.row({r.position, r.method, std::to_string(r.order_or_samples),
               format_double(r.abs_error)});
}

std::vector<std::pair<std::string, double>> gradient_check(const Likelihood& lik,
                                                           std::uint64_t seed) {
    // small random model per the spec shape: n=10, m=3, q=2
    const int n = 10, m = 3, q = 2;
    Rng rng(Rng::derive(seed, 0x6C));

    Dataset data;
    data.X.resize(n, q);
    data.y.resize(n);
    for (int i = 0; i < n; ++i)
        for (int d = 0; d < q; ++d) data.X(i, d) = rng.normal();
    switch (lik.family) {
        case LikelihoodFamily::HetGaussian:
        case LikelihoodFamily::HetStudentT:
            for (int i = 0; i < n; ++i) data.y(i) = rng.normal();
            break;
        case LikelihoodFamily::Beta:
            for (int i = 0; i < n; ++i) data.y(i) = rng.uniform(0.05, 0.95);
            break;
        case LikelihoodFamily::LogLogisticSurvival: {
            Eigen::VectorXi delta(n);
            for (int i = 0; i < n; ++i) {
                data.y(i) = std::exp(rng.normal());
                delta(i) = rng.uniform() < 0.3 ? 1 : 0;
            }
            data.censored = delta;
            break;
        }
        case LikelihoodFamily::AdditivePoisson:
        case LikelihoodFamily::MultiplicativePoisson:
            for (int i = 0; i < n; ++i) data.y(i) = static_cast<double>(rng.poisson(2.0));
            break;
    }

    ModelInit init;
    init.inducing = m;
    init.quad_order = 20;
    init.seed = Rng::derive(seed, 0x6D);
    ChainedModel model = init_model(data, lik, init);

    // jostle every packed parameter so nothing sits at a symmetric point
    Eigen::VectorXd params = pack_params(model);
    for (Eigen::Index i = 0; i < params.size(); ++i) params(i) += 0.2 * rng.normal();
    unpack_params(model, params);

    const auto batch = all_indices(data.n());
    const ElboResult res = elbo_with_grads(model, data, batch);
    const Eigen::VectorXd g = pack_grads(model, res.grads);
    const ParamLayout lay = layout_of(model);

    std::vector<std::pair<std::string, double>> report;
    for (const auto& blk : lay.blocks) {
        double worst = 0.0;
        for (Eigen::Index k = 0; k < blk.size; ++k) {
            const Eigen::Index i = blk.offset + k;
            const double h = 1e-5 * std::max(1.0, std::abs(params(i)));
            Eigen::VectorXd p = params;
            p(i) = params(i) + h;
            unpack_params(model, p);
            const double fp = elbo(model, data, batch);
            p(i) = params(i) - h;
            unpack_params(model, p);
            const double fm = elbo(model, data, batch);
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::abs(g(i) - fd) / std::max({std::abs(g(i)), std::abs(fd), 1.0});
            worst = std::max(worst, rel);
        }
        report.emplace_back(blk.name, worst);
    }
    unpack_params(model, params);
    return report;
}

}  // namespace cgp
