#pragma once

// Stateless counter-based Gaussian draws (Philox-4x32-10). A draw is a pure
// function of (seed, domain, stream, i, j), so ensembles can be generated in
// any order or in parallel and still reproduce bit for bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace spdelab {

class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr Counter generate(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            ctr = single_round(ctr, key);
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static constexpr Counter single_round(const Counter& c, const Key& k) noexcept {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// Disjoint namespaces of the counter generator. Brownian increments and
/// initial-datum draws never share a key, which makes the initial datum
/// independent of the driving noise by construction.
enum class StreamDomain : std::uint32_t {
    brownian = 0x00000000u,
    initial_datum = 0x1F3A5C77u,
    gamma_mc = 0x2B7E1516u,
    probe = 0x3C6EF372u,
};

/// Standard normal variate keyed by (seed, domain, stream, i, j).
inline double gaussian(std::uint64_t seed, StreamDomain domain, std::uint64_t stream,
                       std::uint32_t i, std::uint32_t j) noexcept {
    const Philox4x32::Counter ctr{i, j, static_cast<std::uint32_t>(stream),
                                  static_cast<std::uint32_t>(stream >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed),
                              static_cast<std::uint32_t>(seed >> 32) ^ static_cast<std::uint32_t>(domain)};
    const auto w = Philox4x32::generate(ctr, key);
    constexpr double k2pow53 = 1.0 / 9007199254740992.0;
    const std::uint64_t a = ((static_cast<std::uint64_t>(w[0]) << 32) | w[1]) >> 11;
    const std::uint64_t b = ((static_cast<std::uint64_t>(w[2]) << 32) | w[3]) >> 11;
    const double u1 = (static_cast<double>(a) + 0.5) * k2pow53;
    const double u2 = (static_cast<double>(b) + 0.5) * k2pow53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform variate in (0, 1) keyed like `gaussian`.
inline double uniform(std::uint64_t seed, StreamDomain domain, std::uint64_t stream,
                      std::uint32_t i, std::uint32_t j) noexcept {
    const Philox4x32::Counter ctr{i, j, static_cast<std::uint32_t>(stream),
                                  static_cast<std::uint32_t>(stream >> 32)};
    const Philox4x32::Key key{static_cast<std::uint32_t>(seed),
                              static_cast<std::uint32_t>(seed >> 32) ^ static_cast<std::uint32_t>(domain)};
    const auto w = Philox4x32::generate(ctr, key);
    const std::uint64_t a = ((static_cast<std::uint64_t>(w[0]) << 32) | w[1]) >> 11;
    return (static_cast<double>(a) + 0.5) / 9007199254740992.0;
}

}  // namespace spdelab
