#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "spinml/errors.hpp"

namespace spinml {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// Deterministic random stream: identical seed + identical call sequence gives
// an identical output sequence. Substreams are decorrelated by seed mixing and
// independent of the parent's position, which is what makes parallel and
// serial dataset builds byte-identical.
//
// Distributions are fixed explicit algorithms (53-bit uniforms, Box-Muller
// normals, Fisher-Yates shuffles, rejection-sampled bounded ints) rather than
// std:: distributions, whose algorithms are implementation-defined.
class RngHandle {
public:
    explicit RngHandle(std::uint64_t seed)
        : seed_(seed), engine_(detail::splitmix64(seed)) {}

    std::uint64_t seed() const noexcept { return seed_; }

    // Child stream derived from (seed, index); does not consume from or
    // depend on this handle's own draw position.
    RngHandle substream(std::uint64_t index) const {
        return RngHandle(detail::splitmix64(
            seed_ ^ detail::splitmix64(index + 0x51a9b1c3d5e7f901ULL)));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return double((engine_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // Unbiased integer on [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw ParameterError("uniform_int: n must be positive");
        const std::uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t x = engine_();
            if (x >= threshold) return x % n;
        }
    }

    // Standard normal, Box-Muller (two uniforms consumed per draw).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    // k distinct indices from [0, n), uniform without replacement, in draw
    // order (partial Fisher-Yates).
    std::vector<std::size_t> sample_indices(std::size_t k, std::size_t n) {
        if (k > n) throw ParameterError("sample_indices: k exceeds n");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j =
                i + static_cast<std::size_t>(uniform_int(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace spinml
