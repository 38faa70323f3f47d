#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace lvv {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// xoshiro256** seeded through splitmix64; satisfies UniformRandomBitGenerator.
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed = 0) {
        std::uint64_t z = seed;
        for (auto& w : s_) {
            z += 0x9E3779B97F4A7C15ULL;
            w = splitmix64(z);
        }
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on the open interval (0,1)
    double uniform() { return ((*this)() >> 11) * 0x1.0p-53 + 0x1.0p-54; }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> s_{};
};

// Seed of the substream for path `index` under master seed `seed`.
// Depends only on (seed, index), so any partition of paths over workers
// reproduces the same draws.
inline constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t lane = 0) {
    return splitmix64(splitmix64(seed ^ 0x243F6A8885A308D3ULL) + splitmix64(index * 0xD1B54A32D192ED03ULL + lane));
}

}  // namespace lvv
