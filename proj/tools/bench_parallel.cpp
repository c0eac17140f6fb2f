// Times the OpenMP kernels against the serial reference path on the two hot
// loops (gram fill, per-datum expected log-likelihood with gradients) and
// checks the results agree bit-for-bit.
#include <chrono>
#include <iostream>

#include "cgp/chained_model.hpp"
#include "cgp/datagen.hpp"
#include "cgp/harness.hpp"
#include "cgp/parallel.hpp"
#include "cgp/rng.hpp"

using namespace cgp;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double time_ms(F&& fn, int reps) {
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main(int argc, char** argv) {
    const int n = argc > 1 ? std::atoi(argv[1]) : 2000;
    const int m = argc > 2 ? std::atoi(argv[2]) : 100;
    const int reps = argc > 3 ? std::atoi(argv[3]) : 3;

    Dataset data = gen_additive_poisson_default(n, 7);
    ModelInit init;
    init.inducing = m;
    init.seed = 7;
    ChainedModel model = init_model(data, Likelihood::additive_poisson(), init);
    const auto batch = all_indices(data.n());

    Rng rng(11);
    Eigen::MatrixXd A(n, 4), B(m, 4);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = rng.normal();
    Eigen::VectorXd ls = Eigen::VectorXd::Constant(4, 0.8);
    const KernelSpec kern = KernelSpec::ard_rbf(1.3, ls);

    std::cout << "n=" << n << " m=" << m << " threads=" << max_threads() << "\n\n";
    std::cout << "kernel                      serial_ms   openmp_ms   speedup  bitwise\n";

    struct Case {
        const char* name;
        std::function<double()> run;  // returns a digest to defeat dead-code elim
    };
    const std::vector<Case> cases = {
        {"gram(ard_rbf)", [&] { return gram(kern, A, B).sum(); }},
        {"elbo", [&] { return elbo(model, data, batch); }},
        {"elbo_with_grads", [&] {
             const auto r = elbo_with_grads(model, data, batch);
             return r.value + r.grads.d_Z.sum();
         }},
    };

    for (const auto& c : cases) {
        set_parallel_enabled(false);
        const double serial_digest = c.run();
        const double serial_ms = time_ms(c.run, reps);
        set_parallel_enabled(true);
        const double par_digest = c.run();
        const double par_ms = time_ms(c.run, reps);
        const bool same = serial_digest == par_digest;
        std::printf("%-26s %10.2f  %10.2f  %7.2fx  %s\n", c.name, serial_ms, par_ms,
                    serial_ms / par_ms, same ? "yes" : "NO");
        if (!same) {
            std::cerr << "serial and parallel paths disagree\n";
            return 1;
        }
    }
    return 0;
}
