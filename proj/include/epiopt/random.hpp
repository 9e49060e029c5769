#pragma once

// Counter-based random numbers: every (seed, stream) pair addresses an
// independent sequence, so sample i can be regenerated on any worker.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace epiopt
{

/// Philox4x32 with 10 rounds. Key = seed, counter = (block index, stream).
class Philox4x32
{
public:
    using Block = std::array<std::uint32_t, 4>;
    using Key   = std::array<std::uint32_t, 2>;

    static Block bijection(Block counter, Key key)
    {
        constexpr std::uint32_t m0 = 0xD2511F53u;
        constexpr std::uint32_t m1 = 0xCD9E8D57u;
        constexpr std::uint32_t w0 = 0x9E3779B9u;
        constexpr std::uint32_t w1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += w0;
                key[1] += w1;
            }
            const std::uint64_t p0 = std::uint64_t{m0} * counter[0];
            const std::uint64_t p1 = std::uint64_t{m1} * counter[2];
            counter = {static_cast<std::uint32_t>(p1 >> 32) ^ counter[1] ^ key[0], static_cast<std::uint32_t>(p1),
                       static_cast<std::uint32_t>(p0 >> 32) ^ counter[3] ^ key[1], static_cast<std::uint32_t>(p0)};
        }
        return counter;
    }
};

/// Identifies one independent random stream: the experiment seed plus the sample index.
struct SimSeed
{
    std::uint64_t seed   = 0;
    std::uint64_t stream = 0;

    friend bool operator==(const SimSeed&, const SimSeed&) = default;
};

/// UniformRandomBitGenerator over a single Philox stream.
class StreamRng
{
public:
    using result_type = std::uint64_t;

    explicit StreamRng(SimSeed id)
        : key_{static_cast<std::uint32_t>(id.seed), static_cast<std::uint32_t>(id.seed >> 32)}
        , stream_(id.stream)
    {
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()()
    {
        if (slot_ == 2) {
            refill();
        }
        const auto lo = block_[2 * slot_];
        const auto hi = block_[2 * slot_ + 1];
        ++slot_;
        return (std::uint64_t{hi} << 32) | lo;
    }

    /// Uniform on the open interval (0,1) with 53 random bits.
    double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

private:
    void refill()
    {
        const Philox4x32::Block counter{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        block_ = Philox4x32::bijection(counter, key_);
        ++counter_;
        slot_ = 0;
    }

    Philox4x32::Key key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    Philox4x32::Block block_{};
    int slot_ = 2;
};

/// SplitMix64 finalizer; used to derive decorrelated seed bases from small counters.
constexpr std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace epiopt
