#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace rdt {

// Splittable 64-bit PRNG used for every stochastic decision in the project.
//
// The generator is splitmix64 (Steele, Lea & Flood's SplittableRandom mixer).
// Independent streams are derived from a master seed plus a purpose tag:
//
//     Rng r = Rng::derive(master_seed, "world/gen/W1");
//
// The tag is hashed with FNV-1a and mixed into the seed, so the same
// (seed, tag) pair yields the same stream on every platform, and distinct
// tags give decorrelated streams. No std::random distributions are used
// anywhere: uniform and normal draws below are implemented directly so the
// produced bits do not depend on the standard library implementation.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // Decorrelate trivially related seeds (0, 1, 2, ...).
        next_u64();
        next_u64();
    }

    static uint64_t fnv1a(const std::string& tag) {
        uint64_t h = 1469598103934665603ull;
        for (unsigned char c : tag) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    static Rng derive(uint64_t master_seed, const std::string& tag) {
        return Rng(master_seed ^ fnv1a(tag));
    }

    // Derive a sub-stream from this stream (e.g. one per sample index).
    Rng split(uint64_t index) {
        uint64_t base = next_u64();
        return Rng(base ^ (index * 0x9e3779b97f4a7c15ull));
    }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Index in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; one spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rdt
