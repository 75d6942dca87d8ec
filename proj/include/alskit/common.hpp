// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace alskit {

/// Row/column identifier. 32-bit: dimensions are bounded by 2^31-1.
using index_t = std::int32_t;

/// Offsets and element counts. 64-bit: nonzero counts routinely exceed 2^31.
using offset_t = std::int64_t;

/// Stored scalar type for ratings and factor entries.
using real_t = float;

/// Base error. Every failure carries one of four categories so callers
/// (and the CLI exit path) can classify without string matching.
class Error : public std::runtime_error {
public:
    enum class Category { input, capacity, numerical, io };

    Error(Category cat, const std::string& msg) : std::runtime_error(msg), cat_(cat) {}

    [[nodiscard]] Category category() const noexcept { return cat_; }

    [[nodiscard]] const char* category_name() const noexcept {
        switch (cat_) {
            case Category::input: return "input";
            case Category::capacity: return "capacity";
            case Category::numerical: return "numerical";
            case Category::io: return "io";
        }
        return "unknown";
    }

private:
    Category cat_;
};

/// Malformed or out-of-contract input (bad indices, shape mismatch, bad config).
struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(Category::input, msg) {}
};

/// A planned allocation or partition scheme does not fit the declared capacity.
struct CapacityError : Error {
    explicit CapacityError(const std::string& msg) : Error(Category::capacity, msg) {}
};

/// Numerical breakdown (e.g. a non-positive Cholesky pivot).
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(Category::numerical, msg) {}
};

/// Filesystem and serialization failures, including corrupt cache files.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(Category::io, msg) {}
};

namespace detail {

/// splitmix64 finalizer. Derives independent sub-seeds from one run seed so
/// the X init, Theta init, and holdout draw never share a generator stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a over bytes; used for config digests stored in checkpoints.
inline std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace detail

}  // namespace alskit
