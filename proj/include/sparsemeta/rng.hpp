#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "sparsemeta/errors.hpp"

namespace sparsemeta {

// splitmix64 mixing step; used to derive independent seeds from one base seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + salt * 0x9E3779B97F4A7C15ULL + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Deterministic random source. Distribution objects are constructed fresh on
// every call so the engine state alone captures the full generator state;
// save_state/restore_state round-trip exactly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> dist(mean, stddev);
        return dist(engine_);
    }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> dist(lo, hi);
        return dist(engine_);
    }

    // Uniform draw from {0, ..., n-1}.
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw StructuralError("uniform_index: n must be positive");
        std::uniform_int_distribution<std::size_t> dist(0, n - 1);
        return dist(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

    std::string save_state() const {
        std::ostringstream out;
        out << engine_;
        return out.str();
    }

    void restore_state(const std::string& state) {
        std::istringstream in(state);
        in >> engine_;
        if (in.fail()) throw StructuralError("Rng::restore_state: malformed engine state");
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace sparsemeta
