#include "convexlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace convexlab {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo)
{
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

// 53 random bits -> (0, 1)
inline double to_open_unit(std::uint64_t w)
{
    return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

PhiloxBlock philox4x32_10(PhiloxBlock ctr, std::array<std::uint32_t, 2> key)
{
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t index)
{
    return mix64(parent ^ mix64(index + 0x632BE59BD9B4E019ull));
}

CounterRng::CounterRng(RngSpec spec, std::uint64_t first_block)
    : key_{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32)},
      stream_(spec.stream_id), block_(first_block)
{
}

void CounterRng::seek(std::uint64_t block)
{
    block_ = block;
    used_ = 2;
    has_spare_ = false;
}

void CounterRng::refill()
{
    const PhiloxBlock out = philox4x32_10(
        {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        key_);
    ++block_;
    words_ = {(static_cast<std::uint64_t>(out[1]) << 32) | out[0], (static_cast<std::uint64_t>(out[3]) << 32) | out[2]};
    used_ = 0;
}

std::uint64_t CounterRng::next_u64()
{
    if (used_ == 2) refill();
    return words_[used_++];
}

double CounterRng::uniform() { return to_open_unit(next_u64()); }

double CounterRng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    refill();
    used_ = 2;
    const double r = std::sqrt(-2.0 * std::log(to_open_unit(words_[0])));
    const double theta = 2.0 * std::numbers::pi * to_open_unit(words_[1]);
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

}  // namespace convexlab
