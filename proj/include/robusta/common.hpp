#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace robusta {

// Invalid user-supplied data or configuration. Maps to CLI exit code 2.
struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operation not defined for the given kind (e.g. cdf of a categorical model).
struct UnsupportedOperationError : std::logic_error {
    using std::logic_error::logic_error;
};

// A numerical invariant was violated beyond tolerance. Maps to CLI exit code 3.
struct InternalConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent seeds from (base, index)
// so that per-tree / per-repeat streams do not overlap.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Unbiased sample standard deviation; 0 for fewer than two values.
inline double sample_std(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

} // namespace robusta
