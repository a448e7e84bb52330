#pragma once

#include <stdexcept>
#include <string>
#include <cstdint>

namespace tadml {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Half-open temporal interval [start, end) in input-frame units.
struct Segment {
    double start = 0.0;
    double end = 0.0;

    double length() const { return end - start; }
};

struct GroundTruthInstance {
    Segment segment;
    int class_id = 0;
};

struct Detection {
    Segment segment;
    int class_id = 0;
    double score = 0.0;
};

// Deterministic PRNG (splitmix64 core). All randomness in the project flows
// through this so runs are reproducible from a single seed regardless of
// the platform's std::random implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    double normal();

    // derive an independent stream
    Rng fork(std::uint64_t salt) { return Rng(next_u64() ^ salt); }

private:
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace tadml
