/*
   Copyright 2026 The resi Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>

namespace resi {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    std::uint64_t s = x;
    return splitmix64(s);
}

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
{
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

/// A reproducible random stream: xoshiro256** keyed by a 64-bit stream key.
///
/// Streams form a tree. `substream(i)` derives a child whose key depends only
/// on the parent key and `i`, never on how many numbers the parent has already
/// produced, so work split across threads by index draws the same numbers
/// regardless of scheduling. A stream must not be shared between threads.
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed = 0) noexcept : key_(detail::mix64(seed ^ 0x6A09E667F3BCC909ULL))
    {
        reset();
    }

    RngStream substream(std::uint64_t index) const noexcept
    {
        RngStream child;
        child.key_ = detail::mix64(key_ ^ detail::mix64(index + 0xBB67AE8584CAA73BULL));
        child.reset();
        return child;
    }

    std::uint64_t key() const noexcept { return key_; }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return result;
    }

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept
    {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound), bound > 0. Lemire's nearly-divisionless method.
    std::uint64_t below(std::uint64_t bound) noexcept
    {
        __uint128_t m = static_cast<__uint128_t>((*this)()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<__uint128_t>((*this)()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via the Marsaglia polar method; the second variate is cached.
    double normal() noexcept
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// +1 or -1 with equal probability.
    double rademacher() noexcept { return ((*this)() >> 63) ? 1.0 : -1.0; }

private:
    void reset() noexcept
    {
        std::uint64_t sm = key_;
        for (auto& word : s_)
            word = detail::splitmix64(sm);
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t key_;
    std::array<std::uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace resi
