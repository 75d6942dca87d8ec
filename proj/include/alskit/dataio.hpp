// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Dataset ingestion, binary caching, train/test splitting, synthetic
 * generation by duplication, out-of-core block streaming, and checkpointing.
 *
 * On-disk formats are little-endian with fixed-width fields:
 *  - ratings cache: magic, version, rows, cols, nnz as u64; then the row_ptr
 *    (i64), col_idx (i32) and values (f32) arrays, each contiguous.
 *  - checkpoint: magic, version, iteration, which, rows, f, config digest as
 *    u64; then the factor payload (f32).
 *  - grid metadata: a small text file recording p, q, the parent shape and
 *    the cut boundaries; blocks live in one cache file each.
 */

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "alskit/common.hpp"
#include "alskit/factor.hpp"
#include "alskit/sparse.hpp"

namespace alskit {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and use raw array I/O");

/// Supported rating-file encodings.
enum class RatingsFormat { triplet_text, movielens, binary_cache };

/// A dataset reference: location, encoding, and optional declared shape.
/// rows/cols of 0 mean "infer as max index + 1".
struct RatingsFile {
    std::filesystem::path path;
    RatingsFormat format = RatingsFormat::triplet_text;
    offset_t rows = 0;
    offset_t cols = 0;
};

namespace detail {

constexpr std::uint64_t kCacheMagic = 0x414C534B43414348ULL;       // "ALSKCACH"
constexpr std::uint64_t kCheckpointMagic = 0x414C534B43504B54ULL;  // "ALSKCPKT"
constexpr std::uint64_t kFormatVersion = 1;

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint64_t read_u64(std::istream& in, const std::filesystem::path& path,
                              const char* what) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError(path.string() + ": truncated while reading " + what);
    return v;
}

template <typename T>
void write_array(std::ostream& out, const std::vector<T>& v) {
    if (v.empty()) return;
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
void read_array(std::istream& in, std::vector<T>& v, std::size_t count,
                const std::filesystem::path& path, const char* what) {
    v.resize(count);
    if (count == 0) return;
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(count * sizeof(T)));
    if (!in) throw IoError(path.string() + ": truncated while reading " + what);
}

/// Unbiased draw from [0, range) by rejection. mt19937_64 output is fully
/// specified by the standard, so the sequence matches on every platform.
inline std::uint64_t bounded_u64(std::mt19937_64& rng, std::uint64_t range) {
    const std::uint64_t threshold = (0 - range) % range;  // 2^64 mod range
    for (;;) {
        const std::uint64_t v = rng();
        if (v >= threshold) return v % range;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary ratings cache
// ---------------------------------------------------------------------------

/// Write `a` to `path` in the binary cache layout. Grid blocks keep their
/// global column indices; col_offset is not part of the format and is
/// restored from grid metadata on reload.
inline void save_binary_cache(const CsrMatrix& a, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    detail::write_u64(out, detail::kCacheMagic);
    detail::write_u64(out, detail::kFormatVersion);
    detail::write_u64(out, static_cast<std::uint64_t>(a.rows));
    detail::write_u64(out, static_cast<std::uint64_t>(a.cols));
    detail::write_u64(out, static_cast<std::uint64_t>(a.nnz()));
    detail::write_array(out, a.row_ptr);
    detail::write_array(out, a.col_idx);
    detail::write_array(out, a.values);
    if (!out) throw IoError("write failed for " + path.string());
}

/// Read a binary cache file; the result is bit-identical to the matrix that
/// was saved. Truncation, trailing bytes or invariant violations are I/O
/// errors naming the file.
inline CsrMatrix load_binary_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    if (detail::read_u64(in, path, "magic") != detail::kCacheMagic)
        throw IoError(path.string() + ": not a ratings cache (bad magic)");
    if (detail::read_u64(in, path, "version") != detail::kFormatVersion)
        throw IoError(path.string() + ": unsupported cache version");
    const std::uint64_t rows = detail::read_u64(in, path, "rows");
    const std::uint64_t cols = detail::read_u64(in, path, "cols");
    const std::uint64_t nnz = detail::read_u64(in, path, "nnz");
    // Bounds keep the size arithmetic below overflow-free and reject headers
    // that would demand absurd allocations before the size check can run.
    if (rows > (1ULL << 40) || cols > (1ULL << 40) || nnz > (1ULL << 48))
        throw IoError(path.string() + ": corrupt cache header");
    const std::uint64_t expected = 40 + (rows + 1) * 8 + nnz * 8;
    std::error_code ec;
    if (std::filesystem::file_size(path, ec) != expected || ec)
        throw IoError(path.string() + ": cache size does not match its header");
    CsrMatrix a;
    a.rows = static_cast<offset_t>(rows);
    a.cols = static_cast<offset_t>(cols);
    detail::read_array(in, a.row_ptr, static_cast<std::size_t>(rows) + 1, path, "row_ptr");
    detail::read_array(in, a.col_idx, static_cast<std::size_t>(nnz), path, "col_idx");
    detail::read_array(in, a.values, static_cast<std::size_t>(nnz), path, "values");
    try {
        validate(a);
    } catch (const InputError& e) {
        throw IoError(path.string() + ": corrupt cache (" + std::string(e.what()) + ")");
    }
    return a;
}

// ---------------------------------------------------------------------------
// Rating loaders
// ---------------------------------------------------------------------------

/**
 * Load a ratings file into CSR form.
 *
 * - triplet_text: whitespace-separated `row col rating` per line, 0-based.
 * - movielens: tab-separated `user item rating timestamp`, 1-based; the
 *   timestamp and any further fields are ignored.
 * - binary_cache: the layout written by save_binary_cache.
 *
 * Shape comes from the declared rows/cols when nonzero and is inferred as
 * max index + 1 otherwise. Indices outside a declared shape, malformed lines
 * (reported with their line number) and duplicate coordinates are input
 * errors.
 */
inline CsrMatrix load_ratings(const RatingsFile& file) {
    if (file.format == RatingsFormat::binary_cache) {
        CsrMatrix a = load_binary_cache(file.path);
        if ((file.rows > 0 && file.rows != a.rows) || (file.cols > 0 && file.cols != a.cols))
            throw InputError(file.path.string() + ": cached shape " + std::to_string(a.rows) +
                             "x" + std::to_string(a.cols) + " does not match the declared shape");
        return a;
    }
    std::ifstream in(file.path);
    if (!in) throw IoError("cannot open " + file.path.string());
    const bool one_based = file.format == RatingsFormat::movielens;
    std::vector<Triplet> triplets;
    offset_t max_row = -1;
    offset_t max_col = -1;
    std::string line;
    for (offset_t line_no = 1; std::getline(in, line); ++line_no) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        offset_t row = 0;
        offset_t col = 0;
        real_t value = 0.0f;
        if (!(fields >> row >> col >> value))
            throw InputError(file.path.string() + ": parse error at line " +
                             std::to_string(line_no));
        if (!one_based) {
            std::string rest;
            if (fields >> rest)
                throw InputError(file.path.string() + ": parse error at line " +
                                 std::to_string(line_no) + " (trailing field '" + rest + "')");
        }
        if (one_based) {
            if (row < 1 || col < 1)
                throw InputError(file.path.string() + ": parse error at line " +
                                 std::to_string(line_no) + " (ids are 1-based)");
            --row;
            --col;
        } else if (row < 0 || col < 0) {
            throw InputError(file.path.string() + ": parse error at line " +
                             std::to_string(line_no) + " (negative index)");
        }
        if ((file.rows > 0 && row >= file.rows) || (file.cols > 0 && col >= file.cols))
            throw InputError(file.path.string() + ": index (" + std::to_string(row) + ", " +
                             std::to_string(col) + ") at line " + std::to_string(line_no) +
                             " outside the declared shape");
        max_row = std::max(max_row, row);
        max_col = std::max(max_col, col);
        triplets.push_back({row, col, value});
    }
    const offset_t m = file.rows > 0 ? file.rows : max_row + 1;
    const offset_t n = file.cols > 0 ? file.cols : max_col + 1;
    return csr_from_triplets(m, n, triplets);
}

// ---------------------------------------------------------------------------
// Train/test split and synthetic duplication
// ---------------------------------------------------------------------------

/// Outcome of a holdout split. Test triplets are in row-major order.
struct SplitResult {
    CsrMatrix train;
    std::vector<Triplet> test;
};

/**
 * Hold out floor(nnz * holdout_fraction) nonzeros drawn uniformly without
 * replacement (partial Fisher-Yates over nonzero positions). Train and test
 * partition the input exactly, and the same seed always reproduces the same
 * split.
 */
inline SplitResult split_train_test(const CsrMatrix& r, double holdout_fraction,
                                    std::uint64_t seed) {
    if (!(holdout_fraction > 0.0) || !(holdout_fraction < 1.0))
        throw InputError("holdout fraction must lie strictly between 0 and 1");
    const offset_t nnz = r.nnz();
    const offset_t k =
        static_cast<offset_t>(std::floor(holdout_fraction * static_cast<double>(nnz)));
    std::vector<offset_t> pos(static_cast<std::size_t>(nnz));
    std::iota(pos.begin(), pos.end(), offset_t{0});
    std::mt19937_64 rng(seed);
    for (offset_t t = 0; t < k; ++t) {
        const offset_t j =
            t + static_cast<offset_t>(detail::bounded_u64(rng, static_cast<std::uint64_t>(nnz - t)));
        std::swap(pos[static_cast<std::size_t>(t)], pos[static_cast<std::size_t>(j)]);
    }
    std::vector<char> held(static_cast<std::size_t>(nnz), 0);
    for (offset_t t = 0; t < k; ++t) held[static_cast<std::size_t>(pos[static_cast<std::size_t>(t)])] = 1;

    SplitResult out;
    out.train.rows = r.rows;
    out.train.cols = r.cols;
    out.train.row_ptr.reserve(r.row_ptr.size());
    out.train.row_ptr.push_back(0);
    out.train.col_idx.reserve(static_cast<std::size_t>(nnz - k));
    out.train.values.reserve(static_cast<std::size_t>(nnz - k));
    out.test.reserve(static_cast<std::size_t>(k));
    for (offset_t u = 0; u < r.rows; ++u) {
        for (offset_t e = r.row_ptr[u]; e < r.row_ptr[u + 1]; ++e) {
            const auto idx = static_cast<std::size_t>(e);
            if (held[idx]) {
                out.test.push_back({u, r.col_idx[idx], r.values[idx]});
            } else {
                out.train.col_idx.push_back(r.col_idx[idx]);
                out.train.values.push_back(r.values[idx]);
            }
        }
        out.train.row_ptr.push_back(out.train.nnz());
    }
    return out;
}

/**
 * Tile the base pattern horiz times along rows and vert times along columns:
 * the result has shape (horiz*m) x (vert*n) with horiz*vert*nnz nonzeros and
 * every block equals the base, so per-row density within a block is
 * preserved and cost estimates scale linearly with horiz*vert. A nonzero
 * `noise` perturbs each copied value by a seeded uniform draw from
 * [-noise, noise); the default copies values verbatim.
 */
inline CsrMatrix duplicate_synthesize(const CsrMatrix& base, offset_t horiz, offset_t vert,
                                      real_t noise = 0.0f, std::uint64_t seed = 0) {
    if (horiz < 1 || vert < 1) throw InputError("duplication counts must be at least 1");
    const offset_t max_off = std::numeric_limits<offset_t>::max();
    if (base.rows > 0 && horiz > max_off / base.rows)
        throw CapacityError("duplicated row count overflows the index domain");
    if (base.cols > 0 && vert > max_off / base.cols)
        throw CapacityError("duplicated column count overflows the index domain");
    const offset_t out_rows = horiz * base.rows;
    const offset_t out_cols = vert * base.cols;
    if (out_cols > std::numeric_limits<index_t>::max())
        throw CapacityError("duplicated column count " + std::to_string(out_cols) +
                            " exceeds the 32-bit index range");
    if (vert > max_off / horiz) throw CapacityError("duplication factor overflows");
    const offset_t copies = horiz * vert;
    if (base.nnz() > 0 && copies > max_off / base.nnz())
        throw CapacityError("duplicated nonzero count overflows the index domain");
    const offset_t out_nnz = copies * base.nnz();

    CsrMatrix out;
    out.rows = out_rows;
    out.cols = out_cols;
    out.row_ptr.reserve(static_cast<std::size_t>(out_rows) + 1);
    out.row_ptr.push_back(0);
    out.col_idx.reserve(static_cast<std::size_t>(out_nnz));
    out.values.reserve(static_cast<std::size_t>(out_nnz));
    std::mt19937_64 rng(seed);
    for (offset_t h = 0; h < horiz; ++h) {
        for (offset_t u = 0; u < base.rows; ++u) {
            // Column tiles are disjoint ascending ranges, so concatenating
            // them keeps indices strictly increasing within the row.
            for (offset_t v = 0; v < vert; ++v) {
                const auto shift = static_cast<index_t>(v * base.cols);
                for (offset_t e = base.row_ptr[u]; e < base.row_ptr[u + 1]; ++e) {
                    const auto idx = static_cast<std::size_t>(e);
                    out.col_idx.push_back(base.col_idx[idx] + shift);
                    real_t value = base.values[idx];
                    if (noise > 0.0f)
                        value += noise * (2.0f * detail::uniform_unit(rng) - 1.0f);
                    out.values.push_back(value);
                }
            }
            out.row_ptr.push_back(out.nnz());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grid persistence and streaming
// ---------------------------------------------------------------------------

/// Shape-and-cuts record of a persisted grid; the blocks live in one binary
/// cache file each.
struct GridMeta {
    int p = 1;
    int q = 1;
    offset_t rows = 0;
    offset_t cols = 0;
    std::vector<offset_t> row_cuts;
    std::vector<offset_t> col_cuts;
};

/// Position of one block: column partition i, row partition j.
struct BlockRef {
    int i = 0;
    int j = 0;

    friend bool operator==(const BlockRef&, const BlockRef&) = default;
};

namespace detail {

inline std::filesystem::path block_path(const std::filesystem::path& dir, int i, int j) {
    return dir / ("block_" + std::to_string(i) + "_" + std::to_string(j) + ".bin");
}

}  // namespace detail

/// Persist every block of `grid` under `dir` (created if absent) plus a
/// grid.meta file recording shape and cut boundaries.
inline void persist_grid(const GridPartition& grid, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    const auto meta_path = dir / "grid.meta";
    std::ofstream meta(meta_path, std::ios::trunc);
    if (!meta) throw IoError("cannot open " + meta_path.string() + " for writing");
    meta << "alskit-grid 1\n"
         << grid.p << ' ' << grid.q << ' ' << grid.rows << ' ' << grid.cols << '\n';
    for (std::size_t c = 0; c < grid.row_cuts.size(); ++c)
        meta << (c ? " " : "") << grid.row_cuts[c];
    meta << '\n';
    for (std::size_t c = 0; c < grid.col_cuts.size(); ++c)
        meta << (c ? " " : "") << grid.col_cuts[c];
    meta << '\n';
    if (!meta) throw IoError("write failed for " + meta_path.string());
    for (int j = 0; j < grid.q; ++j)
        for (int i = 0; i < grid.p; ++i)
            save_binary_cache(grid.block(i, j), detail::block_path(dir, i, j));
}

inline GridMeta load_grid_meta(const std::filesystem::path& dir) {
    const auto path = dir / "grid.meta";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string tag;
    int version = 0;
    GridMeta meta;
    in >> tag >> version >> meta.p >> meta.q >> meta.rows >> meta.cols;
    if (!in || tag != "alskit-grid" || version != 1 || meta.p < 1 || meta.q < 1)
        throw IoError(path.string() + ": corrupt grid metadata");
    meta.row_cuts.resize(static_cast<std::size_t>(meta.q) + 1);
    meta.col_cuts.resize(static_cast<std::size_t>(meta.p) + 1);
    for (offset_t& c : meta.row_cuts) in >> c;
    for (offset_t& c : meta.col_cuts) in >> c;
    if (!in) throw IoError(path.string() + ": corrupt grid metadata");
    return meta;
}

/// Load one persisted block and restore its column offset from the grid
/// metadata. Failures name the block position.
inline CsrMatrix load_block(const std::filesystem::path& dir, const GridMeta& meta, int i, int j) {
    if (i < 0 || i >= meta.p || j < 0 || j >= meta.q)
        throw InputError("block (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") lies outside the " + std::to_string(meta.p) + "x" +
                         std::to_string(meta.q) + " grid");
    try {
        CsrMatrix b = load_binary_cache(detail::block_path(dir, i, j));
        if (b.rows != meta.row_cuts[static_cast<std::size_t>(j) + 1] -
                          meta.row_cuts[static_cast<std::size_t>(j)] ||
            b.cols != meta.cols)
            throw IoError("shape does not match the grid metadata");
        b.col_offset = meta.col_cuts[static_cast<std::size_t>(i)];
        return b;
    } catch (const IoError& e) {
        throw IoError("block (" + std::to_string(i) + ", " + std::to_string(j) + "): " +
                      std::string(e.what()));
    }
}

/// One streamed block together with its grid position.
struct StreamedBlock {
    BlockRef ref;
    CsrMatrix block;
};

/**
 * Background prefetching reader over persisted blocks.
 *
 * One loader thread reads blocks in plan order into a bounded queue of depth
 * 2, so the load of block k+1 overlaps the consumer's work on block k.
 * next() yields blocks in exactly the plan order and nullopt once the plan
 * is exhausted; a loader failure surfaces on the next() call that would have
 * returned the failing block.
 */
class BlockStream {
  public:
    BlockStream(std::filesystem::path dir, std::vector<BlockRef> order)
        : dir_(std::move(dir)), meta_(load_grid_meta(dir_)), order_(std::move(order)),
          loader_([this] { run(); }) {}

    ~BlockStream() {
        {
            std::lock_guard lock(mu_);
            cancel_ = true;
        }
        cv_.notify_all();
        loader_.join();
    }

    BlockStream(const BlockStream&) = delete;
    BlockStream& operator=(const BlockStream&) = delete;

    /// Blocks until the next block is available.
    std::optional<StreamedBlock> next() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !queue_.empty() || done_; });
        if (!queue_.empty()) {
            StreamedBlock b = std::move(queue_.front());
            queue_.pop_front();
            lock.unlock();
            cv_.notify_all();
            return b;
        }
        if (error_) std::rethrow_exception(error_);
        return std::nullopt;
    }

  private:
    static constexpr std::size_t kQueueDepth = 2;

    void run() {
        try {
            for (const BlockRef& ref : order_) {
                CsrMatrix b = load_block(dir_, meta_, ref.i, ref.j);
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return queue_.size() < kQueueDepth || cancel_; });
                if (cancel_) return;
                queue_.push_back({ref, std::move(b)});
                lock.unlock();
                cv_.notify_all();
            }
        } catch (...) {
            std::lock_guard lock(mu_);
            error_ = std::current_exception();
        }
        {
            std::lock_guard lock(mu_);
            done_ = true;
        }
        cv_.notify_all();
    }

    std::filesystem::path dir_;
    GridMeta meta_;
    std::vector<BlockRef> order_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<StreamedBlock> queue_;
    bool done_ = false;
    bool cancel_ = false;
    std::exception_ptr error_;
    std::thread loader_;  // started last, after all state above exists
};

/// All blocks in row-major order: row partitions outer, column partitions
/// inner, matching the layout of GridPartition::blocks.
inline std::vector<BlockRef> row_major_order(const GridMeta& meta) {
    std::vector<BlockRef> order;
    order.reserve(static_cast<std::size_t>(meta.p) * static_cast<std::size_t>(meta.q));
    for (int j = 0; j < meta.q; ++j)
        for (int i = 0; i < meta.p; ++i) order.push_back({i, j});
    return order;
}

/// Open a prefetching stream over the blocks persisted in `dir`, yielding
/// them in the given plan order.
inline BlockStream stream_blocks(std::filesystem::path dir, std::vector<BlockRef> order) {
    return BlockStream(std::move(dir), std::move(order));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Which factor a checkpoint holds. theta outranks x at the same iteration
/// because an iteration updates X first and Theta second.
enum class FactorKind { x = 0, theta = 1 };

inline const char* factor_kind_name(FactorKind k) noexcept {
    return k == FactorKind::x ? "x" : "theta";
}

/// One recoverable snapshot: a factor matrix at the end of a half-iteration,
/// tagged with the digest of the config that produced it.
struct Checkpoint {
    int iteration = 0;
    FactorKind which = FactorKind::x;
    FactorMatrix factor;
    std::uint64_t digest = 0;
};

namespace detail {

inline std::string checkpoint_name(int iteration, FactorKind which) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "ckpt_%06d_%s.bin", iteration, factor_kind_name(which));
    return buf;
}

/// Accepts ckpt_<digits>_x.bin and ckpt_<digits>_theta.bin.
inline bool parse_checkpoint_name(const std::string& name, int& iteration, int& rank) {
    if (!name.starts_with("ckpt_") || !name.ends_with(".bin")) return false;
    const std::string stem = name.substr(5, name.size() - 9);
    const auto sep = stem.find('_');
    if (sep == std::string::npos || sep == 0 || sep > 9) return false;
    for (std::size_t c = 0; c < sep; ++c)
        if (!std::isdigit(static_cast<unsigned char>(stem[c]))) return false;
    const std::string kind = stem.substr(sep + 1);
    if (kind == "x") rank = 0;
    else if (kind == "theta") rank = 1;
    else return false;
    iteration = std::stoi(stem.substr(0, sep));
    return true;
}

}  // namespace detail

/// Checkpoint file path for (iteration, which) under `dir`.
inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int iteration,
                                             FactorKind which) {
    return dir / detail::checkpoint_name(iteration, which);
}

/**
 * Atomically persist `cp` under `dir`: the payload goes to a temp file that
 * is renamed into place, so a reader never observes a partial checkpoint.
 * Returns the final path.
 */
inline std::filesystem::path write_checkpoint(const Checkpoint& cp,
                                              const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    const auto final_path = checkpoint_path(dir, cp.iteration, cp.which);
    const auto tmp_path = std::filesystem::path(final_path.string() + ".tmp");
    {
        std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp_path.string() + " for writing");
        detail::write_u64(out, detail::kCheckpointMagic);
        detail::write_u64(out, detail::kFormatVersion);
        detail::write_u64(out, static_cast<std::uint64_t>(cp.iteration));
        detail::write_u64(out, static_cast<std::uint64_t>(cp.which));
        detail::write_u64(out, static_cast<std::uint64_t>(cp.factor.rows));
        detail::write_u64(out, static_cast<std::uint64_t>(cp.factor.f));
        detail::write_u64(out, cp.digest);
        detail::write_array(out, cp.factor.entries);
        if (!out) throw IoError("write failed for " + tmp_path.string());
    }
    std::filesystem::rename(tmp_path, final_path, ec);
    if (ec)
        throw IoError("cannot rename " + tmp_path.string() + " into place: " + ec.message());
    return final_path;
}

/// Read one checkpoint file; bit-identical to what was written.
inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    if (detail::read_u64(in, path, "magic") != detail::kCheckpointMagic)
        throw IoError(path.string() + ": not a checkpoint (bad magic)");
    if (detail::read_u64(in, path, "version") != detail::kFormatVersion)
        throw IoError(path.string() + ": unsupported checkpoint version");
    Checkpoint cp;
    cp.iteration = static_cast<int>(detail::read_u64(in, path, "iteration"));
    const std::uint64_t which = detail::read_u64(in, path, "which");
    if (which > 1) throw IoError(path.string() + ": corrupt checkpoint (bad factor kind)");
    cp.which = static_cast<FactorKind>(which);
    const std::uint64_t rows = detail::read_u64(in, path, "rows");
    const std::uint64_t f = detail::read_u64(in, path, "f");
    cp.digest = detail::read_u64(in, path, "digest");
    if (rows > (1ULL << 40) || f > (1ULL << 20))
        throw IoError(path.string() + ": corrupt checkpoint header");
    std::error_code ec;
    if (std::filesystem::file_size(path, ec) != 56 + rows * f * 4 || ec)
        throw IoError(path.string() + ": checkpoint size does not match its header");
    cp.factor = FactorMatrix(static_cast<offset_t>(rows), static_cast<int>(f));
    detail::read_array(in, cp.factor.entries, static_cast<std::size_t>(rows * f), path,
                       "payload");
    return cp;
}

/**
 * Scan `dir` and load the most recent checkpoint, ordered by (iteration,
 * which) with theta outranking x at the same iteration. Returns nullopt when
 * none exists (the caller starts fresh). With an expected digest, a mismatch
 * is a config error: the checkpoints belong to a different run.
 */
inline std::optional<Checkpoint> restore_latest(
    const std::filesystem::path& dir,
    std::optional<std::uint64_t> expected_digest = std::nullopt) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) return std::nullopt;
    int best_iter = -1;
    int best_rank = -1;
    std::filesystem::path best_path;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        int iter = 0;
        int rank = 0;
        if (!detail::parse_checkpoint_name(entry.path().filename().string(), iter, rank))
            continue;
        if (iter > best_iter || (iter == best_iter && rank > best_rank)) {
            best_iter = iter;
            best_rank = rank;
            best_path = entry.path();
        }
    }
    if (best_iter < 0) return std::nullopt;
    Checkpoint cp = read_checkpoint(best_path);
    if (expected_digest && cp.digest != *expected_digest)
        throw InputError(best_path.string() + ": checkpoint config digest mismatch (run has " +
                         std::to_string(*expected_digest) + ", checkpoint has " +
                         std::to_string(cp.digest) + ")");
    return cp;
}

/// Load the most recent checkpoint of one kind, ignoring the other factor.
inline std::optional<Checkpoint> restore_latest_of(const std::filesystem::path& dir,
                                                   FactorKind which) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) return std::nullopt;
    int best_iter = -1;
    std::filesystem::path best_path;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        int iter = 0;
        int rank = 0;
        if (!detail::parse_checkpoint_name(entry.path().filename().string(), iter, rank))
            continue;
        if (rank != static_cast<int>(which)) continue;
        if (iter > best_iter) {
            best_iter = iter;
            best_path = entry.path();
        }
    }
    if (best_iter < 0) return std::nullopt;
    return read_checkpoint(best_path);
}

/**
 * Single background checkpoint writer with at most one write in flight, so
 * the training loop hands off a snapshot and continues. submit() blocks only
 * while a previous write is still running. Write failures are sticky and
 * rethrown by the next submit() or flush().
 */
class CheckpointWriter {
  public:
    explicit CheckpointWriter(std::filesystem::path dir)
        : dir_(std::move(dir)), worker_([this] { run(); }) {}

    ~CheckpointWriter() {
        {
            std::lock_guard lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        worker_.join();  // drains a pending write; errors only surface via flush()
    }

    CheckpointWriter(const CheckpointWriter&) = delete;
    CheckpointWriter& operator=(const CheckpointWriter&) = delete;

    /// Queue `cp` for writing; waits for an in-flight write to finish first.
    void submit(Checkpoint cp) {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return (!pending_ && !writing_) || error_; });
        rethrow_locked();
        pending_ = std::move(cp);
        lock.unlock();
        cv_.notify_all();
    }

    /// Wait until every submitted checkpoint is durably on disk.
    void flush() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return (!pending_ && !writing_) || error_; });
        rethrow_locked();
    }

  private:
    void run() {
        for (;;) {
            std::unique_lock lock(mu_);
            cv_.wait(lock, [&] { return pending_ || stop_; });
            if (!pending_) return;  // stop requested and nothing queued
            Checkpoint cp = std::move(*pending_);
            pending_.reset();
            writing_ = true;
            lock.unlock();
            try {
                write_checkpoint(cp, dir_);
            } catch (...) {
                std::lock_guard relock(mu_);
                error_ = std::current_exception();
            }
            lock.lock();
            writing_ = false;
            lock.unlock();
            cv_.notify_all();
        }
    }

    void rethrow_locked() {
        if (error_) std::rethrow_exception(error_);
    }

    std::filesystem::path dir_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::optional<Checkpoint> pending_;
    bool writing_ = false;
    bool stop_ = false;
    std::exception_ptr error_;
    std::thread worker_;  // started last, after all state above exists
};

}  // namespace alskit
