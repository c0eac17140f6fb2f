#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cgp {

// mt19937_64 engine with hand-rolled transforms. The engine output is fully
// specified by the standard and the transforms below avoid the
// implementation-defined std distributions, so streams are reproducible
// bit-for-bit from a seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Derive an independent stream, e.g. per fold/restart/call index.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 step on seed ^ golden-ratio-scrambled stream
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() { return engine_(); }

    // uniform on (0, 1)
    double uniform() {
        // 53-bit mantissa, shifted away from exact 0
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller, spare value cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Knuth product method below 30; exact superposition split above, with a
    // normal fallback for huge rates where exact simulation is pointless.
    long poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda > 1e6) {
            double x = lambda + std::sqrt(lambda) * normal();
            return x < 0.0 ? 0 : static_cast<long>(std::floor(x + 0.5));
        }
        long total = 0;
        while (lambda > 30.0) {
            total += poisson_knuth(30.0);
            lambda -= 30.0;
        }
        return total + poisson_knuth(lambda);
    }

    // Marsaglia-Tsang; shape < 1 handled by the boosting identity
    double gamma(double shape) {
        if (shape < 1.0) {
            double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double beta(double a, double b) {
        double x = gamma(a);
        double y = gamma(b);
        return x / (x + y);
    }

    // Fisher-Yates over [0, n)
    template <class Vec>
    void shuffle(Vec& idx) {
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(engine_() % i);
            std::swap(idx[i - 1], idx[j]);
        }
    }

  private:
    long poisson_knuth(double lambda) {
        double l = std::exp(-lambda);
        long k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > l);
        return k - 1;
    }

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cgp
