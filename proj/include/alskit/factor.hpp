// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "alskit/common.hpp"

namespace alskit {

/// Dense row-major factor matrix: one f-dimensional row per user or item.
struct FactorMatrix {
    offset_t rows = 0;
    int f = 0;
    std::vector<real_t> entries;  // rows * f, row-major

    FactorMatrix() = default;
    FactorMatrix(offset_t rows_, int f_)
        : rows(rows_), f(f_),
          entries(static_cast<std::size_t>(rows_) * static_cast<std::size_t>(f_), 0.0f) {}

    [[nodiscard]] std::span<real_t> row(offset_t u) noexcept {
        return {entries.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(f),
                static_cast<std::size_t>(f)};
    }
    [[nodiscard]] std::span<const real_t> row(offset_t u) const noexcept {
        return {entries.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(f),
                static_cast<std::size_t>(f)};
    }
};

namespace detail {

/// Uniform [0, 1) float built from the top 24 bits of one 64-bit draw.
/// Avoids std::uniform_real_distribution, whose output is not pinned down by
/// the standard; this mapping is bit-reproducible across platforms.
inline real_t uniform_unit(std::mt19937_64& rng) {
    return static_cast<real_t>(rng() >> 40) * 0x1.0p-24f;
}

}  // namespace detail

/// Seeded uniform [0, 1) initialization, filled row-major. The same
/// (rows, f, seed) always yields bit-identical entries.
inline FactorMatrix random_factor(offset_t rows, int f, std::uint64_t seed) {
    FactorMatrix out(rows, f);
    std::mt19937_64 rng(seed);
    for (real_t& e : out.entries) e = detail::uniform_unit(rng);
    return out;
}

}  // namespace alskit
