#pragma once

#include <string>
#include <vector>

#include "cgp/chained_model.hpp"
#include "cgp/config.hpp"
#include "cgp/dataset.hpp"

namespace cgp {

// CSV ingestion: y column, optional delta column (survival families only),
// every other column is an input feature in header order. Inputs are
// standardized per column when requested and the transform is recorded on
// the dataset.
Dataset ingest_csv(const std::string& path, const Likelihood& lik, const DataSpec& spec);

// csv-or-generator dispatch for a full experiment config
Dataset load_dataset(const ExperimentConfig& cfg);

// deterministic disjoint cover: shuffled indices split into `folds` chunks
std::vector<std::vector<int>> fold_split(Eigen::Index n, int folds, std::uint64_t seed);

// negative mean predictive log density over the test points (per-point mean
// convention)
double nlpd(const ChainedModel& model, const Dataset& test);

// MAE against the predictive median for survival data, predictive mean
// otherwise
double mae(const ChainedModel& model, const Dataset& test);

struct FitOutcome {
    ChainedModel model;
    std::vector<TraceRow> trace;   // of the winning restart
    double train_elbo = 0.0;       // full-batch bound of the winner
    int restart = 0;               // which restart won
};

// multiple-restart protocol: fit `restarts` models from seeds derived off
// (seed, restart) and keep the highest training ELBO
FitOutcome fit_with_restarts(const ExperimentConfig& cfg, const Dataset& data,
                             std::uint64_t seed);

struct CvFoldRow {
    int fold = 0;
    int restart = 0;
    double train_elbo = 0.0;
    double nlpd = 0.0;
    double mae = 0.0;
};

struct CvResult {
    std::vector<CvFoldRow> folds;
    double nlpd_mean = 0.0, nlpd_sd = 0.0;  // sd across folds
    double mae_mean = 0.0, mae_sd = 0.0;
};

CvResult run_cv(const ExperimentConfig& cfg, const Dataset& data);

// ---- file emission ------------------------------------------------------------

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

// cv_metrics.csv: one summary row; cv_folds.csv: per-fold detail
void write_cv_csv(const std::string& dir, const ExperimentConfig& cfg, const Dataset& data,
                  const CvResult& result);

// Grid inputs (raw units) with per-chain latent means/variances and the
// 5/50/95 predictive quantiles, enough to redraw the model-fit figures.
void emit_plot_data(const ChainedModel& model, const Eigen::MatrixXd& grid_raw,
                    const std::optional<Dataset::InputTransform>& transform,
                    const std::string& path);

// per-point predictive report for a labeled test set
void write_predictions_csv(const ChainedModel& model, const Dataset& test,
                           const std::string& path);

void write_dataset_csv(const Dataset& data, const std::string& path,
                       const std::string& truth_path = "");

// quadcheck table (position_label, method, order_or_samples, abs_error)
void write_bias_study_csv(const std::string& path, const std::vector<BiasRow>& rows);

// gradcheck: finite differences vs analytic gradient on a small random model
// for one likelihood; returns max relative error per parameter block
std::vector<std::pair<std::string, double>> gradient_check(const Likelihood& lik,
                                                           std::uint64_t seed);

}  // namespace cgp
