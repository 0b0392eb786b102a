#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

namespace arc {

// splitmix64 step; implementation-independent so seeded runs replay
// identically regardless of the standard library in use.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1)
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
    float next_float() { return float(next_double()); }

    // inclusive range; modulo bias is negligible for the small spans used here
    int next_int(int lo, int hi) {
        std::uint64_t span = std::uint64_t(hi - lo) + 1;
        return lo + int(next_u64() % span);
    }

    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    bool bernoulli(double p) { return next_double() < p; }

    float normal(float mean, float stddev) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double mul = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = float(v * mul);
        have_spare_ = true;
        return mean + stddev * float(u * mul);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = std::size_t(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    float spare_ = 0.0f;
    bool have_spare_ = false;
};

// Fans one root seed out into named streams (data, init, task, ...) so that
// changing one stream's consumption never perturbs the others.
inline std::uint64_t sub_seed(std::uint64_t root, std::string_view stream) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : stream) {
        h ^= std::uint64_t(static_cast<unsigned char>(c));
        h *= 0x100000001b3ull;
    }
    std::uint64_t s = root ^ h;
    return splitmix64(s);
}

}  // namespace arc
