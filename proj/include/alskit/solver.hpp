// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "alskit/common.hpp"
#include "alskit/factor.hpp"
#include "alskit/sparse.hpp"
#include "alskit/thread_pool.hpp"

namespace alskit {

/**
 * Batch of normal-equation systems: for each of `count` rows, an f-by-f
 * symmetric matrix A_u (row-major) and an f-vector right-hand side B_u.
 *
 * Invariant: every stored A_u is exactly symmetric; assembly accumulates the
 * lower triangle only and mirrors it at write time.
 */
struct HermitianBatch {
    offset_t count = 0;
    int f = 0;
    std::vector<real_t> a;  // count * f * f
    std::vector<real_t> b;  // count * f

    void resize(offset_t count_, int f_) {
        count = count_;
        f = f_;
        a.resize(static_cast<std::size_t>(count_) * static_cast<std::size_t>(f_) *
                 static_cast<std::size_t>(f_));
        b.resize(static_cast<std::size_t>(count_) * static_cast<std::size_t>(f_));
    }

    [[nodiscard]] real_t* a_at(offset_t k) noexcept {
        return a.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(f) *
                              static_cast<std::size_t>(f);
    }
    [[nodiscard]] const real_t* a_at(offset_t k) const noexcept {
        return a.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(f) *
                              static_cast<std::size_t>(f);
    }
    [[nodiscard]] real_t* b_at(offset_t k) noexcept {
        return b.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(f);
    }
    [[nodiscard]] const real_t* b_at(offset_t k) const noexcept {
        return b.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(f);
    }
};

/// Knobs shared by the assembly kernels, the batched solver, and als_train.
struct SolverConfig {
    int f = 8;                      // latent rank, used when this config initializes factors
    double lambda = 0.05;           // regularization weight; ridge term is n_u * lambda * I
    int bin = 16;                   // column-tile width of the memory-optimized kernel
    offset_t batch_rows = 4096;     // rows assembled and solved per batch
    bool accumulate_double = true;  // 64-bit accumulators over 32-bit storage
    int threads = 0;                // row-parallel worker count; 0 = hardware
    std::uint64_t seed = 42;        // factor initialization seed
};

/// What batch_solve does when it meets a non-positive pivot.
enum class BreakdownPolicy { fail, zero_row };

namespace detail {

inline void check_update_shapes(const CsrMatrix& r, const FactorMatrix& theta) {
    if (r.col_offset == 0 && theta.rows != r.cols)
        throw InputError("factor rows " + std::to_string(theta.rows) +
                         " do not match matrix columns " + std::to_string(r.cols));
    if (theta.f < 1) throw InputError("rank must be >= 1");
}

/**
 * Memory-optimized assembly of rows [row_begin, row_end) into `out`
 * (pre-sized to the range). Per row: gather theta rows for up to `bin`
 * columns into a contiguous tile, accumulate the f(f+1)/2 lower-triangle
 * products per column into a thread-local tile, add n_u*lambda to the
 * diagonal once after the column sum, then mirror at write time.
 *
 * Summation order over a row's columns is fixed (ascending), so the result
 * does not depend on bin, batch boundaries, or thread count.
 *
 * Column indices are interpreted relative to r.col_offset, which lets the
 * same kernel serve full-matrix assembly and per-partition local assembly.
 *
 * The batch type is generic over its element type so the scale-up path can
 * assemble partials in double before the cross-worker reduction.
 */
template <class Acc, class Batch = HermitianBatch>
void assemble_mo_rows(const CsrMatrix& r, const FactorMatrix& theta, const SolverConfig& cfg,
                      offset_t row_begin, offset_t row_end, Batch& out) {
    const int f = theta.f;
    const offset_t col_lo = r.col_offset;
    const offset_t col_hi = col_lo + theta.rows;
    const int bin = cfg.bin < 1 ? 1 : cfg.bin;

    parallel_for(cfg.threads, row_begin, row_end, 32, [&](offset_t cb, offset_t ce) {
        std::vector<Acc> acc(static_cast<std::size_t>(f) * static_cast<std::size_t>(f));
        std::vector<Acc> bacc(static_cast<std::size_t>(f));
        std::vector<real_t> tile(static_cast<std::size_t>(bin) * static_cast<std::size_t>(f));
        for (offset_t u = cb; u < ce; ++u) {
            std::fill(acc.begin(), acc.end(), Acc(0));
            std::fill(bacc.begin(), bacc.end(), Acc(0));
            const offset_t k0 = r.row_ptr[static_cast<std::size_t>(u)];
            const offset_t k1 = r.row_ptr[static_cast<std::size_t>(u) + 1];
            for (offset_t kk = k0; kk < k1; kk += bin) {
                const offset_t kb = std::min<offset_t>(k1, kk + bin);
                for (offset_t k = kk; k < kb; ++k) {
                    const offset_t v = r.col_idx[static_cast<std::size_t>(k)];
                    if (v < col_lo || v >= col_hi)
                        throw InputError("column " + std::to_string(v) + " outside partition [" +
                                         std::to_string(col_lo) + ", " + std::to_string(col_hi) +
                                         ")");
                    const auto th = theta.row(v - col_lo);
                    std::copy(th.begin(), th.end(),
                              tile.begin() + static_cast<std::size_t>(k - kk) *
                                                 static_cast<std::size_t>(f));
                }
                for (offset_t k = kk; k < kb; ++k) {
                    const real_t* th =
                        tile.data() + static_cast<std::size_t>(k - kk) * static_cast<std::size_t>(f);
                    const Acc rv = static_cast<Acc>(r.values[static_cast<std::size_t>(k)]);
                    for (int i = 0; i < f; ++i) {
                        const Acc ti = static_cast<Acc>(th[i]);
                        Acc* arow = acc.data() + static_cast<std::size_t>(i) * f;
                        for (int j = 0; j <= i; ++j) arow[j] += ti * static_cast<Acc>(th[j]);
                        bacc[static_cast<std::size_t>(i)] += rv * ti;
                    }
                }
            }
            const Acc reg = static_cast<Acc>(cfg.lambda) * static_cast<Acc>(k1 - k0);
            auto* a = out.a_at(u - row_begin);
            auto* b = out.b_at(u - row_begin);
            using OutT = std::remove_reference_t<decltype(a[0])>;
            for (int i = 0; i < f; ++i) {
                const Acc* arow = acc.data() + static_cast<std::size_t>(i) * f;
                for (int j = 0; j < i; ++j) {
                    const OutT val = static_cast<OutT>(arow[j]);
                    a[static_cast<std::size_t>(i) * f + j] = val;
                    a[static_cast<std::size_t>(j) * f + i] = val;
                }
                a[static_cast<std::size_t>(i) * f + i] = static_cast<OutT>(arow[i] + reg);
                b[i] = static_cast<OutT>(bacc[static_cast<std::size_t>(i)]);
            }
        }
    });
}

/// Reference assembly: no tiling, full f*f products straight from theta.
/// Matches the tiled kernel entry for entry because every (i, j) slot sums
/// the same products in the same ascending-column order.
template <class Acc>
void assemble_base_rows(const CsrMatrix& r, const FactorMatrix& theta, double lambda,
                        offset_t row_begin, offset_t row_end, HermitianBatch& out) {
    const int f = theta.f;
    const offset_t col_lo = r.col_offset;
    const offset_t col_hi = col_lo + theta.rows;

    for (offset_t u = row_begin; u < row_end; ++u) {
        std::vector<Acc> acc(static_cast<std::size_t>(f) * static_cast<std::size_t>(f), Acc(0));
        std::vector<Acc> bacc(static_cast<std::size_t>(f), Acc(0));
        const offset_t k0 = r.row_ptr[static_cast<std::size_t>(u)];
        const offset_t k1 = r.row_ptr[static_cast<std::size_t>(u) + 1];
        for (offset_t k = k0; k < k1; ++k) {
            const offset_t v = r.col_idx[static_cast<std::size_t>(k)];
            if (v < col_lo || v >= col_hi)
                throw InputError("column " + std::to_string(v) + " outside partition [" +
                                 std::to_string(col_lo) + ", " + std::to_string(col_hi) + ")");
            const auto th = theta.row(v - col_lo);
            const Acc rv = static_cast<Acc>(r.values[static_cast<std::size_t>(k)]);
            for (int i = 0; i < f; ++i) {
                const Acc ti = static_cast<Acc>(th[i]);
                Acc* arow = acc.data() + static_cast<std::size_t>(i) * f;
                for (int j = 0; j < f; ++j) arow[j] += ti * static_cast<Acc>(th[j]);
                bacc[static_cast<std::size_t>(i)] += rv * ti;
            }
        }
        const Acc reg = static_cast<Acc>(lambda) * static_cast<Acc>(k1 - k0);
        real_t* a = out.a_at(u - row_begin);
        real_t* b = out.b_at(u - row_begin);
        for (int i = 0; i < f; ++i) {
            for (int j = 0; j < f; ++j)
                a[static_cast<std::size_t>(i) * f + j] =
                    static_cast<real_t>(acc[static_cast<std::size_t>(i) * f + j] +
                                        (i == j ? reg : Acc(0)));
            b[i] = static_cast<real_t>(bacc[static_cast<std::size_t>(i)]);
        }
    }
}

/// Cholesky-solve batch entries [0, count) into `out` (count*f floats).
/// Factorization and triangular solves run in double regardless of the
/// storage type; A_u == 0 (empty row) yields the zero vector by convention.
inline void batch_solve_into(const HermitianBatch& batch, real_t* out, BreakdownPolicy policy,
                             int threads) {
    const int f = batch.f;
    parallel_for(threads, 0, batch.count, 16, [&](offset_t cb, offset_t ce) {
        std::vector<double> l(static_cast<std::size_t>(f) * static_cast<std::size_t>(f));
        std::vector<double> y(static_cast<std::size_t>(f));
        for (offset_t k = cb; k < ce; ++k) {
            const real_t* a = batch.a_at(k);
            const real_t* b = batch.b_at(k);
            real_t* x = out + static_cast<std::size_t>(k) * static_cast<std::size_t>(f);

            bool all_zero = true;
            for (int i = 0; all_zero && i < f * f; ++i) all_zero = (a[i] == real_t(0));
            if (all_zero) {
                std::fill(x, x + f, real_t(0));
                continue;
            }

            bool broke = false;
            for (int c = 0; c < f && !broke; ++c) {
                for (int rr = c; rr < f; ++rr) {
                    double s = static_cast<double>(a[static_cast<std::size_t>(rr) * f + c]);
                    for (int t = 0; t < c; ++t)
                        s -= l[static_cast<std::size_t>(rr) * f + t] *
                             l[static_cast<std::size_t>(c) * f + t];
                    if (rr == c) {
                        if (!(s > 0.0)) {
                            if (policy == BreakdownPolicy::fail)
                                throw NumericalError(
                                    "cholesky breakdown at batch index " + std::to_string(k) +
                                    " (pivot " + std::to_string(s) + " at column " +
                                    std::to_string(c) + ")");
                            std::fill(x, x + f, real_t(0));
                            broke = true;
                            break;
                        }
                        l[static_cast<std::size_t>(c) * f + c] = std::sqrt(s);
                    } else {
                        l[static_cast<std::size_t>(rr) * f + c] =
                            s / l[static_cast<std::size_t>(c) * f + c];
                    }
                }
            }
            if (broke) continue;

            for (int i = 0; i < f; ++i) {
                double s = static_cast<double>(b[i]);
                for (int j = 0; j < i; ++j) s -= l[static_cast<std::size_t>(i) * f + j] * y[j];
                y[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i) * f + i];
            }
            for (int i = f - 1; i >= 0; --i) {
                double s = y[static_cast<std::size_t>(i)];
                for (int j = i + 1; j < f; ++j)
                    s -= l[static_cast<std::size_t>(j) * f + i] * static_cast<double>(x[j]);
                x[i] = static_cast<real_t>(s / l[static_cast<std::size_t>(i) * f + i]);
            }
        }
    });
}

/// Dot product accumulated in double, index-ascending.
inline double dot_rows(std::span<const real_t> a, std::span<const real_t> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

}  // namespace detail

/// Reference (untiled) assembly of the full normal-equation batch:
/// A_u = sum over nonzeros of (theta_v theta_v^T + lambda I), which equals
/// sum theta_v theta_v^T + n_u*lambda*I; B_u = sum r_uv * theta_v.
inline HermitianBatch get_hermitian_base(const CsrMatrix& r, const FactorMatrix& theta,
                                         double lambda, bool accumulate_double = true) {
    detail::check_update_shapes(r, theta);
    HermitianBatch out;
    out.resize(r.rows, theta.f);
    if (accumulate_double)
        detail::assemble_base_rows<double>(r, theta, lambda, 0, r.rows, out);
    else
        detail::assemble_base_rows<float>(r, theta, lambda, 0, r.rows, out);
    return out;
}

/// Memory-optimized assembly for a row range, writing into a caller-owned
/// batch sized to (row_end - row_begin). Exposed so large runs can reuse one
/// batch buffer across row batches.
inline void get_hermitian_mo_into(const CsrMatrix& r, const FactorMatrix& theta,
                                  const SolverConfig& cfg, offset_t row_begin, offset_t row_end,
                                  HermitianBatch& out) {
    detail::check_update_shapes(r, theta);
    if (row_begin < 0 || row_end > r.rows || row_begin > row_end)
        throw InputError("row range [" + std::to_string(row_begin) + ", " +
                         std::to_string(row_end) + ") outside matrix");
    out.resize(row_end - row_begin, theta.f);
    if (cfg.accumulate_double)
        detail::assemble_mo_rows<double>(r, theta, cfg, row_begin, row_end, out);
    else
        detail::assemble_mo_rows<float>(r, theta, cfg, row_begin, row_end, out);
}

/// Memory-optimized (tiled) assembly of the full batch. Identical result
/// contract to get_hermitian_base; with matching accumulator precision the
/// two agree bit for bit.
inline HermitianBatch get_hermitian_mo(const CsrMatrix& r, const FactorMatrix& theta,
                                       const SolverConfig& cfg) {
    HermitianBatch out;
    get_hermitian_mo_into(r, theta, cfg, 0, r.rows, out);
    return out;
}

/// Solve every A_u x_u = B_u by in-place Cholesky plus two triangular
/// solves. Rows with A_u = 0 yield x_u = 0. A non-positive pivot raises
/// NumericalError naming the batch index, or zeroes the row under
/// BreakdownPolicy::zero_row.
inline FactorMatrix batch_solve(const HermitianBatch& batch,
                                BreakdownPolicy policy = BreakdownPolicy::fail, int threads = 1) {
    FactorMatrix x(batch.count, batch.f);
    detail::batch_solve_into(batch, x.entries.data(), policy, threads);
    return x;
}

/// One exact half-step: minimize J over X with theta fixed. Rows are
/// processed in batches of cfg.batch_rows so peak Hermitian storage is
/// batch_rows*f*f, not rows*f*f.
inline FactorMatrix update_x(const CsrMatrix& r, const FactorMatrix& theta,
                             const SolverConfig& cfg) {
    detail::check_update_shapes(r, theta);
    const offset_t step = cfg.batch_rows < 1 ? 1 : cfg.batch_rows;
    FactorMatrix x(r.rows, theta.f);
    HermitianBatch batch;
    for (offset_t b0 = 0; b0 < r.rows; b0 += step) {
        const offset_t b1 = std::min<offset_t>(r.rows, b0 + step);
        get_hermitian_mo_into(r, theta, cfg, b0, b1, batch);
        detail::batch_solve_into(batch, x.entries.data() +
                                            static_cast<std::size_t>(b0) *
                                                static_cast<std::size_t>(theta.f),
                                 BreakdownPolicy::fail, cfg.threads);
    }
    return x;
}

/// Symmetric exchange of update_x: minimize J over theta with x fixed,
/// consuming column access to R through its CSC form.
inline FactorMatrix update_theta(const CscMatrix& r_csc, const FactorMatrix& x,
                                 const SolverConfig& cfg) {
    return update_x(transpose_of(r_csc), x, cfg);
}

/// Weighted-lambda-regularized objective
/// J = sum_{r_uv != 0} (r_uv - x_u . theta_v)^2
///   + lambda * (sum_u n_u |x_u|^2 + sum_v n_v |theta_v|^2),
/// accumulated in double in a fixed order.
inline double loss(const CsrMatrix& r, const FactorMatrix& x, const FactorMatrix& theta,
                   double lambda) {
    if (x.rows != r.rows) throw InputError("x rows do not match matrix rows");
    detail::check_update_shapes(r, theta);
    double sq = 0.0;
    std::vector<offset_t> col_nnz(static_cast<std::size_t>(r.cols), 0);
    for (offset_t u = 0; u < r.rows; ++u) {
        for (offset_t k = r.row_ptr[static_cast<std::size_t>(u)];
             k < r.row_ptr[static_cast<std::size_t>(u) + 1]; ++k) {
            const index_t v = r.col_idx[static_cast<std::size_t>(k)];
            ++col_nnz[static_cast<std::size_t>(v)];
            const double d = static_cast<double>(r.values[static_cast<std::size_t>(k)]) -
                             detail::dot_rows(x.row(u), theta.row(v));
            sq += d * d;
        }
    }
    double reg = 0.0;
    for (offset_t u = 0; u < r.rows; ++u) {
        const double n_u = static_cast<double>(r.row_nnz(u));
        if (n_u == 0.0) continue;
        double norm2 = 0.0;
        for (real_t e : x.row(u)) norm2 += static_cast<double>(e) * static_cast<double>(e);
        reg += n_u * norm2;
    }
    for (offset_t v = 0; v < r.cols; ++v) {
        const double n_v = static_cast<double>(col_nnz[static_cast<std::size_t>(v)]);
        if (n_v == 0.0) continue;
        double norm2 = 0.0;
        for (real_t e : theta.row(v)) norm2 += static_cast<double>(e) * static_cast<double>(e);
        reg += n_v * norm2;
    }
    return sq + lambda * reg;
}

/// Root-mean-square error of x_u . theta_v against held-out ratings.
inline double rmse(std::span<const Triplet> test, const FactorMatrix& x,
                   const FactorMatrix& theta) {
    if (test.empty()) throw InputError("empty test set");
    double sq = 0.0;
    for (const Triplet& t : test) {
        if (t.row < 0 || t.row >= x.rows || t.col < 0 || t.col >= theta.rows)
            throw InputError("test pair (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                             ") outside factor shapes");
        const double d =
            static_cast<double>(t.value) - detail::dot_rows(x.row(t.row), theta.row(t.col));
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(test.size()));
}

/// One row of als_train history.
struct IterationMetrics {
    int iteration = 0;
    double train_j = 0.0;
    double test_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct AlsResult {
    FactorMatrix x;
    FactorMatrix theta;
    std::vector<IterationMetrics> history;
};

/// Called after each full iteration; return false to stop early.
using IterationCallback =
    std::function<bool(int iteration, const FactorMatrix& x, const FactorMatrix& theta)>;

/**
 * Single-worker ALS: X and theta start uniform [0, 1) from cfg.seed (theta
 * from a mixed sub-seed), then `iterations` alternating exact half-steps.
 * Records J on the training matrix and RMSE on `test` (NaN when empty)
 * after each iteration. With iterations = 0 the initial factors come back
 * unchanged.
 */
inline AlsResult als_train(const CsrMatrix& r, const CscMatrix& r_csc,
                           std::span<const Triplet> test, const SolverConfig& cfg, int iterations,
                           const IterationCallback& callback = {}) {
    if (iterations < 0) throw InputError("iterations must be >= 0");
    if (r_csc.rows != r.rows || r_csc.cols != r.cols || r_csc.nnz() != r.nnz())
        throw InputError("csr and csc inputs describe different matrices");
    AlsResult res;
    res.x = random_factor(r.rows, cfg.f, cfg.seed);
    res.theta = random_factor(r.cols, cfg.f, detail::mix_seed(cfg.seed, 1));
    for (int t = 1; t <= iterations; ++t) {
        res.x = update_x(r, res.theta, cfg);
        res.theta = update_theta(r_csc, res.x, cfg);
        IterationMetrics row;
        row.iteration = t;
        row.train_j = loss(r, res.x, res.theta, cfg.lambda);
        if (!test.empty()) row.test_rmse = rmse(test, res.x, res.theta);
        res.history.push_back(row);
        if (callback && !callback(t, res.x, res.theta)) break;
    }
    return res;
}

}  // namespace alskit
