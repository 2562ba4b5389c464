#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace curio {

// Seeded random stream. All randomness in a run flows through instances of
// this class so that runs are reproducible bit-for-bit. Distributions are
// hand-rolled on top of mt19937_64 output instead of <random> distribution
// objects, whose sequences are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1).
    double unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        if (!(lo <= hi)) throw std::invalid_argument("rng: empty interval");
        return lo + (hi - lo) * unit();
    }

    // Uniform integer in [0, n).
    int index(int n) {
        if (n <= 0) throw std::invalid_argument("rng: index over empty range");
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
    }

    bool chance(double p) { return unit() < p; }

    // Approximate standard normal (sum of uniforms; cheap and deterministic).
    double normal() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += unit();
        return s - 6.0;
    }

    // Derive an independent child stream; advances this stream once.
    Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(index(i + 1))]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace curio
