#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace gmfg {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011). Stateless:
/// the output is a pure function of (key, counter), which is what makes
/// particle noise reproducible independent of scheduling.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter generate(Counter ctr, Key key)
    {
        for (int round = 0; round < 10; ++round) {
            ctr = single_round(ctr, key);
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static Counter single_round(const Counter& c, const Key& k)
    {
        std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
        std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
        auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        auto lo0 = static_cast<std::uint32_t>(p0);
        auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// SplitMix64 finalizer, used to derive independent stream keys.
constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// One logical noise stream: a Philox key derived from (master seed, stream
/// id). Draws are addressed by (step, slot) so there is no mutable state.
class NoiseStream {
public:
    NoiseStream() = default;
    NoiseStream(std::uint64_t master_seed, std::uint64_t stream_id)
    {
        std::uint64_t k = splitmix64(master_seed ^ splitmix64(stream_id + 0x632BE59BD9B4E019ull));
        key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    }

    /// Two uniforms in (0, 1) for the given address.
    std::array<double, 2> uniforms(std::uint64_t step, std::uint32_t slot, std::uint32_t tag = 0) const
    {
        Philox4x32::Counter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                                slot, tag};
        auto out = Philox4x32::generate(ctr, key_);
        std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
        std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
        constexpr double scale = 0x1.0p-53;
        return {(static_cast<double>(a >> 11) + 0.5) * scale, (static_cast<double>(b >> 11) + 0.5) * scale};
    }

    /// Standard normal via Box-Muller on the address's uniform pair.
    double normal(std::uint64_t step, std::uint32_t slot, std::uint32_t tag = 0) const
    {
        auto u = uniforms(step, slot, tag);
        return std::sqrt(-2.0 * std::log(u[0])) * std::cos(2.0 * std::numbers::pi * u[1]);
    }

    double uniform(std::uint64_t step, std::uint32_t slot, std::uint32_t tag = 0) const
    {
        return uniforms(step, slot, tag)[0];
    }

private:
    Philox4x32::Key key_{0, 0};
};

} // namespace gmfg
