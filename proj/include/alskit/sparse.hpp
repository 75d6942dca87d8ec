// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "alskit/common.hpp"

namespace alskit {

/// One rating observation. Rows and columns are 0-based.
struct Triplet {
    offset_t row = 0;
    offset_t col = 0;
    real_t value = 0.0f;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

/**
 * Compressed sparse row matrix.
 *
 * - row_ptr has rows+1 non-decreasing offsets, row_ptr[0] = 0, row_ptr[rows] = nnz.
 * - col_idx entries are strictly increasing within each row and lie in [0, cols).
 * - The per-row rating count is row_ptr[u+1] - row_ptr[u]; it is derived, not stored.
 *
 * Immutable by convention after construction; safe to share across threads.
 *
 * When the matrix is a grid-partition block, column indices stay GLOBAL and
 * col_offset records the first column of the enclosing column partition, so a
 * factor partition starting at that column is indexed with col - col_offset.
 */
struct CsrMatrix {
    offset_t rows = 0;
    offset_t cols = 0;
    offset_t col_offset = 0;
    std::vector<offset_t> row_ptr;
    std::vector<index_t> col_idx;
    std::vector<real_t> values;

    [[nodiscard]] offset_t nnz() const noexcept { return static_cast<offset_t>(values.size()); }
    [[nodiscard]] offset_t row_nnz(offset_t u) const noexcept { return row_ptr[u + 1] - row_ptr[u]; }
};

/// Column-compressed mirror of CsrMatrix: row_idx entries are strictly
/// increasing within each column. Gives O(1) access to a column of R.
struct CscMatrix {
    offset_t rows = 0;
    offset_t cols = 0;
    std::vector<offset_t> col_ptr;
    std::vector<index_t> row_idx;
    std::vector<real_t> values;

    [[nodiscard]] offset_t nnz() const noexcept { return static_cast<offset_t>(values.size()); }
    [[nodiscard]] offset_t col_nnz(offset_t v) const noexcept { return col_ptr[v + 1] - col_ptr[v]; }
};

/**
 * p-by-q grid of CSR blocks. Block (i, j) holds the parent nonzeros whose row
 * lies in row partition j and whose column lies in column partition i. Row
 * indices inside a block are local to the partition; column indices stay
 * global (see CsrMatrix::col_offset).
 *
 * Cuts are even index-range splits: partition sizes differ by at most one.
 */
struct GridPartition {
    int p = 1;
    int q = 1;
    offset_t rows = 0;
    offset_t cols = 0;
    std::vector<offset_t> row_cuts;  // q+1 boundaries
    std::vector<offset_t> col_cuts;  // p+1 boundaries
    std::vector<CsrMatrix> blocks;   // indexed j*p + i

    [[nodiscard]] const CsrMatrix& block(int i, int j) const {
        return blocks[static_cast<std::size_t>(j) * static_cast<std::size_t>(p) +
                      static_cast<std::size_t>(i)];
    }
};

namespace detail {

inline void check_dims(offset_t m, offset_t n) {
    if (m < 0 || n < 0) throw InputError("matrix dimensions must be non-negative");
    if (n > std::numeric_limits<index_t>::max())
        throw InputError("column count " + std::to_string(n) + " exceeds the 32-bit index range");
}

/// Boundaries of an even split of `total` indices into `parts` ranges.
inline std::vector<offset_t> even_cuts(offset_t total, int parts) {
    std::vector<offset_t> cuts(static_cast<std::size_t>(parts) + 1);
    for (int k = 0; k <= parts; ++k)
        cuts[static_cast<std::size_t>(k)] = total * k / parts;
    return cuts;
}

}  // namespace detail

/// Structural invariant check; throws InputError on the first violation.
inline void validate(const CsrMatrix& a) {
    detail::check_dims(a.rows, a.cols);
    if (static_cast<offset_t>(a.row_ptr.size()) != a.rows + 1)
        throw InputError("row_ptr length must be rows+1");
    if (a.row_ptr.front() != 0 || a.row_ptr.back() != a.nnz())
        throw InputError("row_ptr must start at 0 and end at nnz");
    if (a.col_idx.size() != a.values.size())
        throw InputError("col_idx and values must have equal length");
    for (offset_t u = 0; u < a.rows; ++u) {
        if (a.row_ptr[u + 1] < a.row_ptr[u]) throw InputError("row_ptr must be non-decreasing");
        for (offset_t k = a.row_ptr[u]; k < a.row_ptr[u + 1]; ++k) {
            const index_t v = a.col_idx[static_cast<std::size_t>(k)];
            if (v < 0 || v >= a.cols)
                throw InputError("column index " + std::to_string(v) + " out of range in row " +
                                 std::to_string(u));
            if (k > a.row_ptr[u] && a.col_idx[static_cast<std::size_t>(k - 1)] >= v)
                throw InputError("column indices must be strictly increasing within row " +
                                 std::to_string(u));
        }
    }
}

/**
 * Build a CSR matrix from (row, col, value) triplets. Triplet order does not
 * affect the result. Duplicate coordinates are a hard error: rating data has
 * unique (user, item) pairs, and summing silently would hide corrupt input.
 */
inline CsrMatrix csr_from_triplets(offset_t m, offset_t n, std::span<const Triplet> triplets) {
    detail::check_dims(m, n);
    for (const Triplet& t : triplets) {
        if (t.row < 0 || t.row >= m || t.col < 0 || t.col >= n)
            throw InputError("triplet (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                             ") outside " + std::to_string(m) + "x" + std::to_string(n));
    }

    std::vector<std::size_t> order(triplets.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const Triplet& ta = triplets[a];
        const Triplet& tb = triplets[b];
        return ta.row != tb.row ? ta.row < tb.row : ta.col < tb.col;
    });

    CsrMatrix out;
    out.rows = m;
    out.cols = n;
    out.row_ptr.assign(static_cast<std::size_t>(m) + 1, 0);
    out.col_idx.resize(triplets.size());
    out.values.resize(triplets.size());

    for (std::size_t k = 0; k < order.size(); ++k) {
        const Triplet& t = triplets[order[k]];
        if (k > 0) {
            const Triplet& prev = triplets[order[k - 1]];
            if (prev.row == t.row && prev.col == t.col)
                throw InputError("duplicate coordinate (" + std::to_string(t.row) + ", " +
                                 std::to_string(t.col) + ")");
        }
        out.col_idx[k] = static_cast<index_t>(t.col);
        out.values[k] = t.value;
        ++out.row_ptr[static_cast<std::size_t>(t.row) + 1];
    }
    for (offset_t u = 0; u < m; ++u)
        out.row_ptr[static_cast<std::size_t>(u) + 1] += out.row_ptr[static_cast<std::size_t>(u)];
    return out;
}

/// Enumerate all nonzeros in row-major order (rows ascending, columns ascending).
inline std::vector<Triplet> csr_to_triplets(const CsrMatrix& a) {
    std::vector<Triplet> out;
    out.reserve(static_cast<std::size_t>(a.nnz()));
    for (offset_t u = 0; u < a.rows; ++u)
        for (offset_t k = a.row_ptr[u]; k < a.row_ptr[u + 1]; ++k)
            out.push_back({u, a.col_idx[static_cast<std::size_t>(k)],
                           a.values[static_cast<std::size_t>(k)]});
    return out;
}

/// Counting-sort conversion. Stability keeps row indices ascending per column,
/// so csr_to_csc followed by csc_to_csr reproduces the input bit-exactly.
inline CscMatrix csr_to_csc(const CsrMatrix& a) {
    CscMatrix out;
    out.rows = a.rows;
    out.cols = a.cols;
    out.col_ptr.assign(static_cast<std::size_t>(a.cols) + 1, 0);
    out.row_idx.resize(static_cast<std::size_t>(a.nnz()));
    out.values.resize(static_cast<std::size_t>(a.nnz()));

    for (index_t v : a.col_idx) ++out.col_ptr[static_cast<std::size_t>(v) + 1];
    for (offset_t v = 0; v < a.cols; ++v)
        out.col_ptr[static_cast<std::size_t>(v) + 1] += out.col_ptr[static_cast<std::size_t>(v)];

    std::vector<offset_t> next(out.col_ptr.begin(), out.col_ptr.end() - 1);
    for (offset_t u = 0; u < a.rows; ++u) {
        for (offset_t k = a.row_ptr[u]; k < a.row_ptr[u + 1]; ++k) {
            const index_t v = a.col_idx[static_cast<std::size_t>(k)];
            const offset_t slot = next[static_cast<std::size_t>(v)]++;
            out.row_idx[static_cast<std::size_t>(slot)] = static_cast<index_t>(u);
            out.values[static_cast<std::size_t>(slot)] = a.values[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

inline CsrMatrix csc_to_csr(const CscMatrix& a) {
    CsrMatrix out;
    out.rows = a.rows;
    out.cols = a.cols;
    out.row_ptr.assign(static_cast<std::size_t>(a.rows) + 1, 0);
    out.col_idx.resize(static_cast<std::size_t>(a.nnz()));
    out.values.resize(static_cast<std::size_t>(a.nnz()));

    for (index_t u : a.row_idx) ++out.row_ptr[static_cast<std::size_t>(u) + 1];
    for (offset_t u = 0; u < a.rows; ++u)
        out.row_ptr[static_cast<std::size_t>(u) + 1] += out.row_ptr[static_cast<std::size_t>(u)];

    std::vector<offset_t> next(out.row_ptr.begin(), out.row_ptr.end() - 1);
    for (offset_t v = 0; v < a.cols; ++v) {
        for (offset_t k = a.col_ptr[v]; k < a.col_ptr[v + 1]; ++k) {
            const index_t u = a.row_idx[static_cast<std::size_t>(k)];
            const offset_t slot = next[static_cast<std::size_t>(u)]++;
            out.col_idx[static_cast<std::size_t>(slot)] = static_cast<index_t>(v);
            out.values[static_cast<std::size_t>(slot)] = a.values[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

/// Reinterpret a CSC matrix as the CSR form of its transpose. The three
/// arrays carry over unchanged; only the row/column roles swap.
inline CsrMatrix transpose_of(const CscMatrix& a) {
    CsrMatrix out;
    out.rows = a.cols;
    out.cols = a.rows;
    out.row_ptr = a.col_ptr;
    out.col_idx = a.row_idx;
    out.values = a.values;
    return out;
}

/**
 * Split R into a p-by-q grid of CSR blocks with even index-range cuts.
 * Every parent nonzero lands in exactly one block; within a block the
 * row-major, column-ascending order of the parent is preserved.
 */
inline GridPartition grid_partition(const CsrMatrix& r, int p, int q) {
    if (q < 1 || q > std::max<offset_t>(r.rows, 1))
        throw InputError("row partition count q=" + std::to_string(q) + " outside [1, " +
                         std::to_string(std::max<offset_t>(r.rows, 1)) + "]");
    if (p < 1 || p > std::max<offset_t>(r.cols, 1))
        throw InputError("column partition count p=" + std::to_string(p) + " outside [1, " +
                         std::to_string(std::max<offset_t>(r.cols, 1)) + "]");

    GridPartition g;
    g.p = p;
    g.q = q;
    g.rows = r.rows;
    g.cols = r.cols;
    g.row_cuts = detail::even_cuts(r.rows, q);
    g.col_cuts = detail::even_cuts(r.cols, p);
    g.blocks.resize(static_cast<std::size_t>(p) * static_cast<std::size_t>(q));

    for (int j = 0; j < q; ++j) {
        const offset_t r0 = g.row_cuts[static_cast<std::size_t>(j)];
        const offset_t r1 = g.row_cuts[static_cast<std::size_t>(j) + 1];
        const offset_t local_rows = r1 - r0;

        std::vector<std::vector<offset_t>> counts(
            static_cast<std::size_t>(p),
            std::vector<offset_t>(static_cast<std::size_t>(local_rows) + 1, 0));
        for (offset_t u = r0; u < r1; ++u) {
            int i = 0;
            for (offset_t k = r.row_ptr[u]; k < r.row_ptr[u + 1]; ++k) {
                const index_t v = r.col_idx[static_cast<std::size_t>(k)];
                while (v >= g.col_cuts[static_cast<std::size_t>(i) + 1]) ++i;
                ++counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(u - r0) + 1];
            }
        }

        for (int i = 0; i < p; ++i) {
            CsrMatrix& b = g.blocks[static_cast<std::size_t>(j) * static_cast<std::size_t>(p) +
                                    static_cast<std::size_t>(i)];
            b.rows = local_rows;
            b.cols = r.cols;
            b.col_offset = g.col_cuts[static_cast<std::size_t>(i)];
            b.row_ptr = std::move(counts[static_cast<std::size_t>(i)]);
            for (offset_t u = 0; u < local_rows; ++u)
                b.row_ptr[static_cast<std::size_t>(u) + 1] += b.row_ptr[static_cast<std::size_t>(u)];
            b.col_idx.resize(static_cast<std::size_t>(b.row_ptr.back()));
            b.values.resize(static_cast<std::size_t>(b.row_ptr.back()));
        }

        std::vector<offset_t> cursor(static_cast<std::size_t>(p), 0);
        for (offset_t u = r0; u < r1; ++u) {
            int i = 0;
            for (offset_t k = r.row_ptr[u]; k < r.row_ptr[u + 1]; ++k) {
                const index_t v = r.col_idx[static_cast<std::size_t>(k)];
                while (v >= g.col_cuts[static_cast<std::size_t>(i) + 1]) ++i;
                CsrMatrix& b = g.blocks[static_cast<std::size_t>(j) * static_cast<std::size_t>(p) +
                                        static_cast<std::size_t>(i)];
                const offset_t slot = b.row_ptr[static_cast<std::size_t>(u - r0)] +
                                      cursor[static_cast<std::size_t>(i)]++;
                b.col_idx[static_cast<std::size_t>(slot)] = v;
                b.values[static_cast<std::size_t>(slot)] = r.values[static_cast<std::size_t>(k)];
            }
            for (int i2 = 0; i2 < p; ++i2) cursor[static_cast<std::size_t>(i2)] = 0;
        }
    }
    return g;
}

}  // namespace alskit
