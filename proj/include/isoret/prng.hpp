// Copyright 2026 the isoret authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

namespace isoret {

/// SplitMix64 stream with the uniform and Gaussian conventions every
/// generator in the library shares.
///
/// uniform():  (x >> 11) * 2^-53, in [0, 1).
/// gaussian(): Box-Muller on two consecutive uniforms (u1, u2). The cosine
///             branch is returned first and the sine branch is cached for the
///             next gaussian() call, so a uniform pair is never split. Calling
///             uniform() does not discard a cached Gaussian.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double gaussian() noexcept {
        if (cached_) {
            const double g = *cached_;
            cached_.reset();
            return g;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        // 1 - u1 lies in (0, 1], so the log is finite.
        const double radius = std::sqrt(-2.0 * std::log(1.0 - u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        return radius * std::cos(angle);
    }

    /// Uniform integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept {
        auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

private:
    std::uint64_t state_;
    std::optional<double> cached_;
};

/// Fisher-Yates shuffle driven by SplitMix64::below.
template <typename RandomIt>
void shuffle(RandomIt first, RandomIt last, SplitMix64& rng) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
        const auto j = rng.below(i);
        std::swap(first[i - 1], first[j]);
    }
}

}  // namespace isoret
