#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "gradflow/linalg.hpp"

namespace gradflow {

/// Seeded generator whose output is identical across standard libraries:
/// mt19937_64 is fully specified, and the mappings below are spelled out
/// instead of relying on the unspecified std::*_distribution algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, n) by rejection, no modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

    DenseMatrix normal_matrix(std::size_t rows, std::size_t cols, double scale = 1.0) {
        DenseMatrix m(rows, cols);
        for (double& x : m.values()) x = scale * normal();
        return m;
    }

    DenseMatrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
        DenseMatrix m(rows, cols);
        for (double& x : m.values()) x = uniform(lo, hi);
        return m;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace gradflow
