#pragma once
#include <cstdint>
#include <cmath>

namespace diver {

// Counter-based generator built on the SplitMix64 finalizer: output(i) is a pure
// function of (key, i), so independent streams never share state and any draw can
// be replayed without replaying the ones before it. Every stochastic module in the
// pipeline derives its streams from here, which is what makes serial and threaded
// runs bit-identical.
class Rng {
public:
    explicit Rng(uint64_t key) : key_(key), counter_(0), have_spare_(false), spare_(0.0) {}

    // Independent substream: mixes the label into the key. Rng(k).stream(a) and
    // Rng(k).stream(b) are uncorrelated for a != b.
    Rng stream(uint64_t label) const {
        return Rng(mix(key_ ^ mix(label + 0x9e3779b97f4a7c15ULL)));
    }

    uint64_t next_u64() {
        return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
    }

    // Uniform in [0, 1): 53 mantissa bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n) by rejection; exact for any n >= 1.
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do { v = next_u64(); } while (v >= limit);
        return v % n;
    }

    // Standard normal, Box-Muller (trigonometric form). The pair is generated
    // together and the spare cached, so draw order is fixed and reproducible.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t key_;
    uint64_t counter_;
    bool have_spare_;
    double spare_;
};

} // namespace diver
