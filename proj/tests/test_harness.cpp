#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgp/checkpoint.hpp"
#include "cgp/config.hpp"
#include "cgp/csv.hpp"
#include "cgp/datagen.hpp"
#include "cgp/errors.hpp"
#include "cgp/harness.hpp"
#include "cgp/rng.hpp"

using namespace cgp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cgp_test_" + std::to_string(Rng(::getpid()).next_u64() % 1000000));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

ChainedModel constant_model(double f, double g, const Likelihood& lik) {
    ChainedModel m;
    m.likelihood = lik;
    m.rule = gh_rule(20);
    m.latents.push_back(Latent::constant_latent(f, false));
    m.latents.push_back(Latent::constant_latent(g, false));
    return m;
}

}  // namespace

TEST_CASE("csv ingest round trips a hand-written file") {
    TempDir tmp;
    write_file(tmp.file("d.csv"), "x0,x1,y\n1,10,0.5\n2,20,1.5\n3,30,2.5\n");
    DataSpec spec;
    spec.standardize_inputs = false;
    const Dataset d = ingest_csv(tmp.file("d.csv"), Likelihood::het_gaussian(), spec);
    CHECK(d.n() == 3);
    CHECK(d.q() == 2);
    CHECK(d.X(1, 1) == 20.0);
    CHECK(d.y(2) == 2.5);
    CHECK(!d.censored);

    // standardization records the inverse transform
    DataSpec std_spec;
    const Dataset s = ingest_csv(tmp.file("d.csv"), Likelihood::het_gaussian(), std_spec);
    REQUIRE(s.input_transform);
    CHECK(std::abs(s.X.col(0).mean()) < 1e-12);
    Eigen::MatrixXd raw(1, 2);
    raw << 2.0, 20.0;
    CHECK(s.input_transform->apply(raw)(0, 0) == doctest::Approx(s.X(1, 0)));
}

TEST_CASE("csv ingest errors carry location") {
    TempDir tmp;
    write_file(tmp.file("bad.csv"), "x0,y\n1,2\nfoo,3\n");
    CHECK_THROWS_WITH_AS(ingest_csv(tmp.file("bad.csv"), Likelihood::het_gaussian(), {}),
                         doctest::Contains("row 3"), DataError);

    write_file(tmp.file("noy.csv"), "x0,t\n1,2\n");
    CHECK_THROWS_AS(ingest_csv(tmp.file("noy.csv"), Likelihood::het_gaussian(), {}), DataError);

    write_file(tmp.file("ragged.csv"), "x0,y\n1,2\n3\n");
    CHECK_THROWS_AS(ingest_csv(tmp.file("ragged.csv"), Likelihood::het_gaussian(), {}), DataError);
}

TEST_CASE("delta column is only accepted for survival") {
    TempDir tmp;
    write_file(tmp.file("s.csv"), "x0,y,delta\n1,2.0,0\n2,0.7,1\n");
    const Dataset d =
        ingest_csv(tmp.file("s.csv"), Likelihood::log_logistic_survival(), {});
    REQUIRE(d.censored);
    CHECK((*d.censored)(1) == 1);
    CHECK_THROWS_AS(ingest_csv(tmp.file("s.csv"), Likelihood::het_gaussian(), {}), DataError);
}

TEST_CASE("beta family rejects boundary targets with a row index") {
    TempDir tmp;
    write_file(tmp.file("b.csv"), "x0,y\n0.1,0.5\n0.2,1.0\n");
    try {
        ingest_csv(tmp.file("b.csv"), Likelihood::beta(), {});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(e.row == 1);
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
}

TEST_CASE("fold split is a disjoint cover") {
    const auto folds = fold_split(10, 2, 3);
    REQUIRE(folds.size() == 2);
    std::vector<int> seen(10, 0);
    for (const auto& f : folds)
        for (int i : f) seen[static_cast<std::size_t>(i)]++;
    for (int c : seen) CHECK(c == 1);  // each point in exactly one test split

    const auto f2 = fold_split(10, 2, 3);
    CHECK(f2 == folds);
    const auto f3 = fold_split(11, 3, 3);
    CHECK(f3[0].size() + f3[1].size() + f3[2].size() == 11);
    CHECK_THROWS_AS(fold_split(10, 1, 3), ConfigError);
}

TEST_CASE("nlpd closed-form spot checks") {
    // v*=0 het gaussian at y = m_f with unit noise: 0.5 log(2 pi)
    Dataset test;
    test.X = Eigen::MatrixXd::Zero(1, 1);
    test.y = Eigen::VectorXd::Zero(1);
    const ChainedModel m = constant_model(0.0, 0.0, Likelihood::het_gaussian());
    CHECK(nlpd(m, test) == doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));

    // uniform beta predictive has density 1 everywhere
    Dataset bt;
    bt.X = Eigen::MatrixXd::Zero(3, 1);
    bt.y.resize(3);
    bt.y << 0.2, 0.5, 0.9;
    const ChainedModel mb = constant_model(0.0, 0.0, Likelihood::beta());
    CHECK(nlpd(mb, bt) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("nlpd against a monte carlo oracle") {
    Rng rng(211);
    Dataset d = gen_beta_synthetic_default(40, 19);
    ModelInit init;
    init.inducing = 6;
    init.seed = 4;
    ChainedModel model = init_model(d, Likelihood::beta(), init);

    const auto P = predict_latents(model, d.X);
    double mc_nlpd = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        McRule mc{200000, Rng::derive(31, static_cast<std::uint64_t>(i))};
        const auto est = mc_expect_2d(mc, P.f.mean(i), P.f.var(i), P.g.mean(i), P.g.var(i),
                                      [&](double f, double g) {
                                          return std::exp(
                                              log_density(model.likelihood, d.y(i), 0, f, g));
                                      });
        mc_nlpd -= std::log(est.estimate);
    }
    mc_nlpd /= static_cast<double>(d.n());
    CHECK(std::abs(nlpd(model, d) - mc_nlpd) < 0.01);
}

TEST_CASE("metrics are invariant to test row order") {
    Dataset d = gen_beta_synthetic_default(24, 23);
    ModelInit init;
    init.inducing = 5;
    init.seed = 6;
    ChainedModel model = init_model(d, Likelihood::beta(), init);

    std::vector<int> perm = all_indices(d.n());
    Rng rng(29);
    rng.shuffle(perm);
    const Dataset shuffled = d.subset(perm);
    CHECK(nlpd(model, d) == doctest::Approx(nlpd(model, shuffled)).epsilon(1e-12));
    CHECK(mae(model, d) == doctest::Approx(mae(model, shuffled)).epsilon(1e-12));
}

TEST_CASE("config parsing, overrides and kernels") {
    TempDir tmp;
    write_file(tmp.file("e.ini"), R"(# experiment
[experiment]
name = demo
seed = 11
likelihood = het_student_t
nu = 3.5
inducing = 7
folds = 4
restarts = 2

[train]
optimizer = adagrad
rate = 0.02
iters = 123
batch = 16

[data]
generator = beta_synthetic
n = 50

[kernel.f]
type = sum
[kernel.f.child0]
type = ard_rbf
variance = 1.5
lengthscales = 0.4 0.6
active_dims = 0 1
[kernel.f.child1]
type = bias
variance = 0.25
)");
    auto cfg = ExperimentConfig::from_file(tmp.file("e.ini"));
    CHECK(cfg.name == "demo");
    CHECK(cfg.seed == 11);
    CHECK(cfg.likelihood.family == LikelihoodFamily::HetStudentT);
    CHECK(cfg.likelihood.nu == 3.5);
    CHECK(cfg.inducing == 7);
    CHECK(cfg.folds == 4);
    CHECK(cfg.train.optimizer == TrainConfig::Optimizer::Adagrad);
    CHECK(cfg.train.iters == 123);
    REQUIRE(cfg.kernel_f);
    CHECK(cfg.kernel_f->type == KernelSpec::Type::Sum);
    CHECK(cfg.kernel_f->children[0].lengthscales(1) == 0.6);
    CHECK(cfg.kernel_f->children[1].variance == 0.25);
    CHECK(!cfg.kernel_g);

    auto cfg2 = ExperimentConfig::from_file(tmp.file("e.ini"), {"train.rate=0.5", "experiment.seed=99"});
    CHECK(cfg2.train.rate == 0.5);
    CHECK(cfg2.seed == 99);

    write_file(tmp.file("bad.ini"), "[data]\ncsv = a.csv\ngenerator = beta_synthetic\n");
    CHECK_THROWS_AS(ExperimentConfig::from_file(tmp.file("bad.ini")), ConfigError);
    write_file(tmp.file("bad2.ini"), "[experiment]\nlikelihood = nope\n[data]\ngenerator = beta_synthetic\n");
    CHECK_THROWS_AS(ExperimentConfig::from_file(tmp.file("bad2.ini")), ConfigError);
}

TEST_CASE("checkpoint round trips bit-exactly and rewrites byte-identically") {
    TempDir tmp;
    Dataset d = gen_survival_synthetic(30, 0.2, 7);
    ModelInit init;
    init.inducing = 5;
    init.seed = 3;
    ChainedModel model = init_model(d, Likelihood::log_logistic_survival(), init);

    Dataset::InputTransform tr;
    tr.mean = Eigen::VectorXd::Constant(2, 0.25);
    tr.scale = Eigen::VectorXd::Constant(2, 2.0);

    const std::string p1 = tmp.file("ck.json");
    write_checkpoint(p1, model, tr);
    const Checkpoint ck = read_checkpoint(p1);
    CHECK(pack_params(ck.model) == pack_params(model));
    CHECK(ck.model.likelihood.name() == model.likelihood.name());
    CHECK(ck.model.rule.order == model.rule.order);
    REQUIRE(ck.transform);
    CHECK(ck.transform->mean == tr.mean);

    const std::string p2 = tmp.file("ck2.json");
    write_checkpoint(p2, ck.model, ck.transform);
    CHECK(slurp(p1) == slurp(p2));

    CHECK_THROWS_AS(read_checkpoint(tmp.file("missing.json")), DataError);
    write_file(tmp.file("junk.json"), "{\"format\": \"other\"}");
    CHECK_THROWS_AS(read_checkpoint(tmp.file("junk.json")), DataError);
}

TEST_CASE("plot data: empty grid, quantile ordering, gaussian closed form") {
    TempDir tmp;
    const ChainedModel m = constant_model(1.0, -0.5, Likelihood::het_gaussian());

    emit_plot_data(m, Eigen::MatrixXd(0, 1), {}, tmp.file("empty.csv"));
    CHECK(slurp(tmp.file("empty.csv")) == "x0,f_mean,f_var,g_mean,g_var,q05,q50,q95\n");

    Eigen::MatrixXd grid(3, 1);
    grid << -1.0, 0.0, 1.0;
    emit_plot_data(m, grid, {}, tmp.file("plot.csv"));
    const CsvTable t = read_csv(tmp.file("plot.csv"));
    REQUIRE(t.values.rows() == 3);
    const int q05 = t.column("q05"), q50 = t.column("q50"), q95 = t.column("q95");
    for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK(t.values(i, q05) <= t.values(i, q50));
        CHECK(t.values(i, q50) <= t.values(i, q95));
        // v*=0: plain normal quantiles around the constant latents
        const double sigma = std::exp(-0.25);
        CHECK(t.values(i, q50) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(t.values(i, q95) == doctest::Approx(1.0 + 1.6448536269514722 * sigma).epsilon(1e-5));
    }
}

TEST_CASE("cv on a tiny run: shapes, determinism, metric files") {
    TempDir tmp;
    ExperimentConfig cfg;
    cfg.seed = 5;
    cfg.likelihood = Likelihood::het_gaussian();
    cfg.inducing = 4;
    cfg.quad_order = 10;
    cfg.folds = 2;
    cfg.restarts = 2;
    cfg.train.iters = 30;
    cfg.train.fixed_iters = 5;
    cfg.train.rate = 0.01;
    cfg.train.batch_size = 64;

    const Dataset d = gen_corrupt_motorcycle(motorcycle_standin(2), 2);
    const CvResult r1 = run_cv(cfg, d);
    REQUIRE(r1.folds.size() == 2);
    for (const auto& row : r1.folds) {
        CHECK(std::isfinite(row.nlpd));
        CHECK(std::isfinite(row.mae));
        CHECK(row.restart >= 0);
        CHECK(row.restart < 2);
    }
    const CvResult r2 = run_cv(cfg, d);
    CHECK(r1.nlpd_mean == r2.nlpd_mean);
    CHECK(r1.mae_sd == r2.mae_sd);

    write_cv_csv(tmp.path.string(), cfg, d, r1);
    const std::string metrics = slurp(tmp.file("cv_metrics.csv"));
    CHECK(metrics.find("nlpd_sd_across_folds") != std::string::npos);
    CHECK(metrics.find("het_gaussian") != std::string::npos);
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);  // header + one row
    const CsvTable folds = read_csv(tmp.file("cv_folds.csv"));
    CHECK(folds.values.rows() == 2);
}

TEST_CASE("gradient check harness passes for two families") {
    for (const auto& lik : {Likelihood::het_gaussian(), Likelihood::beta()}) {
        for (const auto& [block, err] : gradient_check(lik, 12)) {
            INFO(lik.name() << " " << block);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("trace csv format") {
    TempDir tmp;
    write_trace_csv(tmp.file("t.csv"), {{1, -3.5, 1}, {2, -3.25, 2}});
    CHECK(slurp(tmp.file("t.csv")) == "iteration,elbo,phase\n1,-3.5,1\n2,-3.25,2\n");
}
