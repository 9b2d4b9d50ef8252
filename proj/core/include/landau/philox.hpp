#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace landau {

/// Philox4x32-10 counter-based generator. A (key, counter) pair maps to four
/// 32-bit words; any draw is addressable in O(1), which makes per-path streams
/// reproducible independent of scheduling.
struct Philox4x32 {
    static constexpr std::uint32_t M0 = 0xD2511F53u;
    static constexpr std::uint32_t M1 = 0xCD9E8D57u;
    static constexpr std::uint32_t W0 = 0x9E3779B9u;
    static constexpr std::uint32_t W1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::uint64_t key,
                                              const std::array<std::uint32_t, 4>& counter) {
        std::uint32_t c0 = counter[0], c1 = counter[1], c2 = counter[2], c3 = counter[3];
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c0;
            const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c2;
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n0 = hi1 ^ c1 ^ k0;
            const std::uint32_t n1 = lo1;
            const std::uint32_t n2 = hi0 ^ c3 ^ k1;
            const std::uint32_t n3 = lo0;
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
            k0 += W0;
            k1 += W1;
        }
        return {c0, c1, c2, c3};
    }
};

/// Three standard normals for (path stream, step), via Box-Muller on one block.
inline void philox_normal3(std::uint64_t seed, std::uint64_t stream, std::uint64_t step,
                           double out[3]) {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    const auto r = Philox4x32::block(seed, ctr);
    const double inv = 1.0 / 4294967296.0;
    const double u0 = (r[0] + 0.5) * inv;
    const double u1 = (r[1] + 0.5) * inv;
    const double u2 = (r[2] + 0.5) * inv;
    const double u3 = (r[3] + 0.5) * inv;
    const double m0 = std::sqrt(-2.0 * std::log(u0));
    const double m1 = std::sqrt(-2.0 * std::log(u2));
    out[0] = m0 * std::cos(2.0 * M_PI * u1);
    out[1] = m0 * std::sin(2.0 * M_PI * u1);
    out[2] = m1 * std::cos(2.0 * M_PI * u3);
}

} // namespace landau
