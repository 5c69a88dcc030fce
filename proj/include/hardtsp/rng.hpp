#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

#include "hardtsp/errors.hpp"

namespace hardtsp {

/// splitmix64 finalizer; the standard 64-bit avalanche mix.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Combines a seed with a tag into a new seed. Order-sensitive.
inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag));
}

/// FNV-1a over a string, for readable stream tags.
inline std::uint64_t tag64(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic random stream.
///
/// The engine is std::mt19937_64 (bit-exact across implementations) and all
/// distribution transforms are written out here, so a given seed yields the
/// same values on every platform and standard library.
///
/// Child streams are derived from the construction seed, not the engine
/// state, so derivation is insensitive to how much the parent has consumed.
/// That makes generation plans resumable: the stream for (epoch, batch,
/// instance) is a pure function of the master seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    /// Child stream for a numeric tag.
    Rng child(std::uint64_t tag) const { return Rng(mix64(seed_, tag)); }

    /// Child stream for a named purpose.
    Rng child(std::string_view name) const { return child(tag64(name)); }

    /// Child stream for a named purpose plus counters (epoch, batch, ...).
    Rng child(std::string_view name, std::uint64_t a) const { return child(tag64(name)).child(a); }
    Rng child(std::string_view name, std::uint64_t a, std::uint64_t b) const {
        return child(tag64(name)).child(a).child(b);
    }

    /// Raw 64 random bits.
    std::uint64_t bits() { return engine_(); }

    /// Uniform double in [0, 1) with 53 significant bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) {
        if (!(lo < hi)) throw DomainError("uniform: empty interval");
        return lo + (hi - lo) * uniform();
    }

    /// Uniform integer in [lo, hi], both ends included.
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw DomainError("uniform_int: empty range");
        auto span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        auto draw = static_cast<std::uint64_t>(uniform() * static_cast<double>(span));
        if (draw >= span) draw = span - 1;
        return static_cast<int>(lo + static_cast<std::int64_t>(draw));
    }

    /// Standard normal via Box-Muller; the pair's second value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace hardtsp
