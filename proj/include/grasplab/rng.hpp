#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "grasplab/errors.hpp"
#include "grasplab/text.hpp"

namespace grasplab {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

inline uint64_t mix_seed(uint64_t a, std::string_view s) {
    return mix_seed(a, fnv1a64(s));
}

// Deterministic RNG. The engine is fully specified by the standard; all
// derived draws below avoid std distributions, whose outputs are
// implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection-free modulo is fine here; bias at
    // 64 bits is far below anything observable in these experiments.
    uint64_t below(uint64_t n) {
        if (n == 0) throw ContractError("Rng::below requires n > 0");
        return engine_() % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Index draw from non-negative weights; entries with zero mass are never
    // chosen. Throws if total mass is zero.
    size_t pick_weighted(const std::vector<double>& weights) {
        double total = 0;
        for (double w : weights) total += w > 0 ? w : 0;
        if (total <= 0) throw ContractError("pick_weighted requires positive total mass");
        double u = uniform01() * total;
        double acc = 0;
        size_t last_positive = 0;
        for (size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0) continue;
            acc += weights[i];
            last_positive = i;
            if (u < acc) return i;
        }
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace grasplab
