#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ahlp {

using index_t = std::int64_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Thrown on malformed input files; carries the offending line.
class parse_error : public std::runtime_error {
public:
    parse_error(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Numerically or structurally singular matrix; pivot index in the original ordering.
class singular_error : public std::runtime_error {
public:
    singular_error(index_t pivot, const std::string& what)
        : std::runtime_error(what + " (pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
    index_t pivot() const { return pivot_; }

private:
    index_t pivot_;
};

/// A structural claim checked at runtime failed (e.g. fill outside a predicted pattern).
class structure_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class invalid_argument_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Deterministic RNG. mt19937_64 has a pinned spec; the uniform mappings below are
/// implemented by hand because the standard distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // xoshiro-free splitmix64: tiny, stable, good enough for instance generation
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    index_t below(index_t n) { return n <= 1 ? 0 : static_cast<index_t>(next_u64() % static_cast<std::uint64_t>(n)); }

private:
    std::uint64_t state_;
};

inline bool finite(double v) { return std::isfinite(v); }

} // namespace ahlp
