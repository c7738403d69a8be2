#pragma once

// Counter-based random numbers (Philox4x32-10). The value of draw k on
// stream (seed, stream_id) depends on nothing else, so results do not depend
// on how work is scheduled.

#include <array>
#include <cstdint>

namespace convexlab {

struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    bool operator==(const RngSpec&) const = default;
};

using PhiloxBlock = std::array<std::uint32_t, 4>;

PhiloxBlock philox4x32_10(PhiloxBlock counter, std::array<std::uint32_t, 2> key);

/// SplitMix64 finaliser.
std::uint64_t mix64(std::uint64_t x);

/// Child stream id for sub-task `index` of stream `parent`.
std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t index);

inline RngSpec derive(const RngSpec& parent, std::uint64_t index)
{
    return {parent.seed, derive_stream(parent.stream_id, index)};
}

/// Sequential reader over one counter-based stream. Each 128-bit block
/// yields two uniforms or two standard normals (Box-Muller).
class CounterRng {
public:
    explicit CounterRng(RngSpec spec, std::uint64_t first_block = 0);

    /// Jump to block `block`; drops any cached normal.
    void seek(std::uint64_t block);
    std::uint64_t next_u64();
    /// Uniform in (0, 1).
    double uniform();
    double normal();

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_;
    std::array<std::uint64_t, 2> words_{};
    int used_ = 2;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace convexlab
