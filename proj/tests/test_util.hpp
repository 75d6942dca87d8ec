// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <unistd.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "alskit/common.hpp"
#include "alskit/factor.hpp"
#include "alskit/solver.hpp"
#include "alskit/sparse.hpp"

namespace testutil {

using alskit::CsrMatrix;
using alskit::FactorMatrix;
using alskit::offset_t;
using alskit::real_t;
using alskit::Triplet;

inline double unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// nnz distinct random coordinates with ratings in [0.5, 5).
inline std::vector<Triplet> random_triplets(std::mt19937_64& rng, offset_t m, offset_t n,
                                            offset_t nnz) {
    std::set<std::pair<offset_t, offset_t>> seen;
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(nnz));
    while (static_cast<offset_t>(out.size()) < nnz) {
        const offset_t u = static_cast<offset_t>(rng() % static_cast<std::uint64_t>(m));
        const offset_t v = static_cast<offset_t>(rng() % static_cast<std::uint64_t>(n));
        if (!seen.insert({u, v}).second) continue;
        out.push_back({u, v, static_cast<real_t>(0.5 + 4.5 * unit(rng))});
    }
    return out;
}

inline Eigen::MatrixXd dense_from_csr(const CsrMatrix& a) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(a.rows, a.cols);
    for (offset_t u = 0; u < a.rows; ++u)
        for (offset_t k = a.row_ptr[u]; k < a.row_ptr[u + 1]; ++k)
            d(u, a.col_idx[static_cast<std::size_t>(k)]) =
                static_cast<double>(a.values[static_cast<std::size_t>(k)]);
    return d;
}

inline Eigen::MatrixXd dense_from_factor(const FactorMatrix& x) {
    Eigen::MatrixXd d(x.rows, x.f);
    for (offset_t u = 0; u < x.rows; ++u)
        for (int i = 0; i < x.f; ++i) d(u, i) = static_cast<double>(x.row(u)[i]);
    return d;
}

/// Brute-force normal equations for row u: A_u = sum (theta_v theta_v^T
/// + lambda I) over the row's nonzeros, B_u = sum r_uv theta_v; dense
/// double arithmetic, independent of the library kernels.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> dense_hermitian_row(const CsrMatrix& r,
                                                                       const FactorMatrix& theta,
                                                                       double lambda, offset_t u) {
    const int f = theta.f;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(f, f);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(f);
    for (offset_t k = r.row_ptr[u]; k < r.row_ptr[u + 1]; ++k) {
        const offset_t v = r.col_idx[static_cast<std::size_t>(k)];
        Eigen::VectorXd th(f);
        for (int i = 0; i < f; ++i) th(i) = static_cast<double>(theta.row(v)[i]);
        a += th * th.transpose() + lambda * Eigen::MatrixXd::Identity(f, f);
        b += static_cast<double>(r.values[static_cast<std::size_t>(k)]) * th;
    }
    return {a, b};
}

/// Dense double evaluation of the weighted-lambda objective.
inline double dense_loss(const CsrMatrix& r, const FactorMatrix& x, const FactorMatrix& theta,
                         double lambda) {
    Eigen::MatrixXd xd = dense_from_factor(x);
    Eigen::MatrixXd td = dense_from_factor(theta);
    std::vector<offset_t> col_nnz(static_cast<std::size_t>(r.cols), 0);
    double sq = 0.0;
    for (offset_t u = 0; u < r.rows; ++u) {
        for (offset_t k = r.row_ptr[u]; k < r.row_ptr[u + 1]; ++k) {
            const offset_t v = r.col_idx[static_cast<std::size_t>(k)];
            ++col_nnz[static_cast<std::size_t>(v)];
            const double d = static_cast<double>(r.values[static_cast<std::size_t>(k)]) -
                             xd.row(u).dot(td.row(v));
            sq += d * d;
        }
    }
    double reg = 0.0;
    for (offset_t u = 0; u < r.rows; ++u)
        reg += static_cast<double>(r.row_nnz(u)) * xd.row(u).squaredNorm();
    for (offset_t v = 0; v < r.cols; ++v)
        reg += static_cast<double>(col_nnz[static_cast<std::size_t>(v)]) * td.row(v).squaredNorm();
    return sq + lambda * reg;
}

/// Relative gap with an absolute floor so exact zeros compare equal.
inline double rel_gap(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-30});
    return std::abs(a - b) / scale;
}

/// Largest relative entry gap between two equally shaped value arrays.
inline double max_rel_gap(const std::vector<real_t>& a, const std::vector<real_t>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, rel_gap(static_cast<double>(a[i]), static_cast<double>(b[i])));
    return worst;
}

/// Max-norm relative gap, the right scale for solver outputs where single
/// entries may sit near zero after cancellation.
inline double normwise_gap(const std::vector<real_t>& a, const std::vector<real_t>& b) {
    double diff = 0.0, scale = 1e-30;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
        scale = std::max(scale, std::abs(static_cast<double>(b[i])));
    }
    return diff / scale;
}

/// Unique directory under the system temp root, removed on destruction.
class ScopedTempDir {
  public:
    explicit ScopedTempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("alskit_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~ScopedTempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScopedTempDir(const ScopedTempDir&) = delete;
    ScopedTempDir& operator=(const ScopedTempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

/// Structural checksum over a matrix's arrays (shape, pointers, indices and
/// value bytes), for comparing load paths without materializing both sides.
inline std::uint64_t matrix_digest(const CsrMatrix& a) {
    std::string bytes;
    auto append = [&bytes](const void* p, std::size_t len) {
        bytes.append(static_cast<const char*>(p), len);
    };
    append(&a.rows, sizeof a.rows);
    append(&a.cols, sizeof a.cols);
    append(&a.col_offset, sizeof a.col_offset);
    append(a.row_ptr.data(), a.row_ptr.size() * sizeof(offset_t));
    append(a.col_idx.data(), a.col_idx.size() * sizeof(alskit::index_t));
    append(a.values.data(), a.values.size() * sizeof(real_t));
    return alskit::detail::fnv1a64(bytes);
}

}  // namespace testutil
