#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace fuseformer {

// Deterministic random source. The engine (mt19937_64) has a sequence fixed
// by the standard; all transforms are hand-rolled so streams are identical
// across standard-library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0,n)
    int uniform_int(int n) { return static_cast<int>(eng_() % static_cast<uint64_t>(n)); }

    // standard normal via Box-Muller; two draws per call
    double normal() {
        double u1 = 1.0 - uniform(); // (0,1], keeps log() finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(eng_() % static_cast<uint64_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

} // namespace fuseformer
