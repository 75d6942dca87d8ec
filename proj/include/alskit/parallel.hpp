// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "alskit/common.hpp"
#include "alskit/solver.hpp"
#include "alskit/sparse.hpp"
#include "alskit/thread_pool.hpp"

namespace alskit {

/**
 * Worker layout for the scale-up path. `workers` is the logical worker
 * count p (one worker per theta partition); `groups` model sockets for the
 * two-phase reduction; `capacity` is the per-worker memory budget counted
 * in scalars. `threads` is the physical thread pool that executes the
 * logical workers; fewer threads than workers degrade the parallel loops
 * to waves without changing any result.
 */
struct Topology {
    int workers = 1;
    int threads = 0;  // 0 = one physical thread per logical worker
    std::vector<std::vector<int>> groups;  // empty = one flat group
    offset_t capacity = std::numeric_limits<offset_t>::max();
};

/// The left side of the per-worker footprint inequality, term by term:
/// a feasible scheme needs x_part + theta_part + r_block + hermitian + rhs
/// + headroom < capacity.
struct FootprintTerms {
    offset_t x_part = 0;     // ceil(m/q) * f
    offset_t theta_part = 0; // ceil(n/p) * f
    offset_t r_block = 0;    // 2*nnz/(p*q) + ceil(m/q) + 1, the CSR block estimate
    offset_t hermitian = 0;  // ceil(m/q) * f^2
    offset_t rhs = 0;        // ceil(m/q) * f
    offset_t headroom = 0;   // caller-supplied slack

    [[nodiscard]] offset_t total() const noexcept {
        return x_part + theta_part + r_block + hermitian + rhs + headroom;
    }
};

/// Name of the largest footprint term; used in reports and capacity errors.
inline const char* binding_term(const FootprintTerms& t) noexcept {
    const offset_t vals[] = {t.x_part, t.theta_part, t.r_block, t.hermitian, t.rhs, t.headroom};
    const char* names[] = {"m*f/q", "n*f/p", "R_block", "m/q*f^2", "m/q*f", "headroom"};
    int best = 0;
    for (int i = 1; i < 6; ++i)
        if (vals[i] > vals[best]) best = i;
    return names[best];
}

/// One (p, q) combination the planner evaluated.
struct PlanAttempt {
    int p = 0;
    int q = 0;
    FootprintTerms terms;
    bool feasible = false;
};

/// Chosen grid scheme plus the evaluation trail that led to it.
struct PartitionPlan {
    int p = 1;
    int q = 1;
    offset_t headroom = 0;
    FootprintTerms terms;
    offset_t per_worker_footprint = 0;
    std::vector<PlanAttempt> attempts;
};

enum class ReduceScheme { one_phase, two_phase };

/// A buffer hand-off: worker `src` sends its partial of slice `slice` to
/// worker `dst`, which adds it in.
struct Transfer {
    int src = 0;
    int dst = 0;
    int slice = 0;

    friend bool operator==(const Transfer&, const Transfer&) = default;
};

/**
 * Reduction plan over p workers. After executing phase1, a barrier, then
 * phase2, worker i holds slice i of the elementwise sum of all workers'
 * batches. one_phase sends every partial straight to its destination;
 * two_phase reduces within each group first, then exchanges only one
 * partial per (slice, foreign group) across groups.
 */
struct ReduceSchedule {
    ReduceScheme scheme = ReduceScheme::one_phase;
    int workers = 1;
    std::vector<std::vector<int>> groups;
    std::vector<Transfer> phase1;
    std::vector<Transfer> phase2;

    [[nodiscard]] std::size_t total_transfers() const noexcept {
        return phase1.size() + phase2.size();
    }

    /// Transfers whose endpoints sit in different groups, the expensive
    /// kind the two-phase scheme exists to reduce.
    [[nodiscard]] std::size_t cross_group_transfers() const {
        std::vector<int> group_of(static_cast<std::size_t>(workers), 0);
        for (std::size_t g = 0; g < groups.size(); ++g)
            for (int w : groups[g]) group_of[static_cast<std::size_t>(w)] = static_cast<int>(g);
        std::size_t n = 0;
        for (const auto* phase : {&phase1, &phase2})
            for (const Transfer& t : *phase)
                if (group_of[static_cast<std::size_t>(t.src)] !=
                    group_of[static_cast<std::size_t>(t.dst)])
                    ++n;
        return n;
    }
};

namespace detail {

/// Groups as given, or one flat group; validated disjoint and covering.
inline std::vector<std::vector<int>> normalize_groups(const Topology& topo) {
    std::vector<std::vector<int>> groups = topo.groups;
    if (groups.empty()) {
        groups.emplace_back();
        for (int w = 0; w < topo.workers; ++w) groups[0].push_back(w);
    }
    std::vector<char> seen(static_cast<std::size_t>(topo.workers), 0);
    for (const auto& g : groups) {
        if (g.empty()) throw InputError("empty worker group");
        for (int w : g) {
            if (w < 0 || w >= topo.workers)
                throw InputError("group member " + std::to_string(w) + " outside worker range");
            if (seen[static_cast<std::size_t>(w)])
                throw InputError("worker " + std::to_string(w) + " appears in two groups");
            seen[static_cast<std::size_t>(w)] = 1;
        }
    }
    for (int w = 0; w < topo.workers; ++w)
        if (!seen[static_cast<std::size_t>(w)])
            throw InputError("worker " + std::to_string(w) + " missing from groups");
    return groups;
}

inline void validate_topology(const Topology& topo) {
    if (topo.workers < 1) throw InputError("topology needs at least one worker");
    if (topo.capacity <= 0) throw InputError("capacity must be positive");
    normalize_groups(topo);
}

/// Slice boundaries for a batch of `count` entries over p slices; the
/// first count mod p slices take one extra entry.
inline std::vector<offset_t> slice_cuts(offset_t count, int p) {
    const offset_t base = count / p;
    const offset_t rem = count % p;
    std::vector<offset_t> cuts(static_cast<std::size_t>(p) + 1, 0);
    for (int i = 0; i < p; ++i)
        cuts[static_cast<std::size_t>(i) + 1] =
            cuts[static_cast<std::size_t>(i)] + base + (i < rem ? 1 : 0);
    return cuts;
}

/// Double-storage twin of HermitianBatch for the internal scale-up
/// pipeline: keeping partials in double until after the reduction holds the
/// su-vs-single-worker gap to reassociation error instead of per-partial
/// float rounding amplified by the solve.
struct BatchD {
    offset_t count = 0;
    int f = 0;
    std::vector<double> a;
    std::vector<double> b;

    void resize(offset_t count_, int f_) {
        count = count_;
        f = f_;
        a.resize(static_cast<std::size_t>(count_) * static_cast<std::size_t>(f_) *
                 static_cast<std::size_t>(f_));
        b.resize(static_cast<std::size_t>(count_) * static_cast<std::size_t>(f_));
    }

    [[nodiscard]] double* a_at(offset_t k) noexcept {
        return a.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(f) *
                              static_cast<std::size_t>(f);
    }
    [[nodiscard]] const double* a_at(offset_t k) const noexcept {
        return a.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(f) *
                              static_cast<std::size_t>(f);
    }
    [[nodiscard]] double* b_at(offset_t k) noexcept {
        return b.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(f);
    }
    [[nodiscard]] const double* b_at(offset_t k) const noexcept {
        return b.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(f);
    }
};

/// Reduction executor shared by the public float entry point and the
/// double-storage scale-up path; see parallel_reduce for the semantics.
template <class Batch>
std::vector<Batch> reduce_batches(const std::vector<Batch>& parts, const ReduceSchedule& sched,
                                  int threads) {
    const int p = sched.workers;
    if (static_cast<int>(parts.size()) != p)
        throw InputError("expected " + std::to_string(p) + " partial batches, got " +
                         std::to_string(parts.size()));
    for (const Batch& part : parts)
        if (part.count != parts[0].count || part.f != parts[0].f)
            throw InputError("partial batches disagree on count or rank");

    const offset_t count = parts[0].count;
    const int f = parts[0].f;
    const std::vector<offset_t> cuts = slice_cuts(count, p);
    const std::size_t ff = static_cast<std::size_t>(f) * static_cast<std::size_t>(f);

    std::vector<Batch> out(static_cast<std::size_t>(p));
    parallel_for(threads, 0, p, 1, [&](offset_t sb, offset_t se) {
        for (offset_t s = sb; s < se; ++s) {
            const int slice = static_cast<int>(s);
            const offset_t c0 = cuts[static_cast<std::size_t>(slice)];
            const offset_t c1 = cuts[static_cast<std::size_t>(slice) + 1];
            const std::size_t len_a = static_cast<std::size_t>(c1 - c0) * ff;
            const std::size_t len_b =
                static_cast<std::size_t>(c1 - c0) * static_cast<std::size_t>(f);

            // Per-worker accumulation state for this slice, created on
            // first touch from that worker's own partial.
            std::vector<std::vector<double>> state(static_cast<std::size_t>(p));
            const auto touch = [&](int w) -> std::vector<double>& {
                auto& buf = state[static_cast<std::size_t>(w)];
                if (buf.empty()) {
                    buf.resize(len_a + len_b);
                    const auto* pa = parts[static_cast<std::size_t>(w)].a_at(c0);
                    const auto* pb = parts[static_cast<std::size_t>(w)].b_at(c0);
                    for (std::size_t i = 0; i < len_a; ++i) buf[i] = static_cast<double>(pa[i]);
                    for (std::size_t i = 0; i < len_b; ++i)
                        buf[len_a + i] = static_cast<double>(pb[i]);
                }
                return buf;
            };
            touch(slice);

            for (const auto* phase : {&sched.phase1, &sched.phase2}) {
                std::vector<Transfer> mine;
                for (const Transfer& t : *phase)
                    if (t.slice == slice) mine.push_back(t);
                std::sort(mine.begin(), mine.end(), [](const Transfer& a, const Transfer& b) {
                    return a.dst != b.dst ? a.dst < b.dst : a.src < b.src;
                });
                // Barrier semantics: senders expose their pre-phase buffers.
                std::vector<std::vector<double>> snapshot(static_cast<std::size_t>(p));
                for (const Transfer& t : mine) {
                    auto& src = snapshot[static_cast<std::size_t>(t.src)];
                    if (src.empty()) src = touch(t.src);
                }
                for (const Transfer& t : mine) {
                    auto& dst = touch(t.dst);
                    const auto& src = snapshot[static_cast<std::size_t>(t.src)];
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
                }
            }

            Batch& res = out[static_cast<std::size_t>(slice)];
            res.resize(c1 - c0, f);
            using OutT = std::remove_reference_t<decltype(res.a[0])>;
            const auto& final_buf = touch(slice);
            for (std::size_t i = 0; i < len_a; ++i)
                res.a[i] = static_cast<OutT>(final_buf[i]);
            for (std::size_t i = 0; i < len_b; ++i)
                res.b[i] = static_cast<OutT>(final_buf[len_a + i]);
        }
    });
    return out;
}

}  // namespace detail

/// Evaluate the per-worker footprint of a (p, q) grid scheme. Partition
/// sizes use ceilings (the worst worker), the nonzero share uses a floor
/// quotient; all terms count scalars.
inline FootprintTerms footprint_terms(offset_t m, offset_t n, offset_t nnz, int f, int p, int q,
                                      offset_t headroom) {
    const offset_t rows_q = (m + q - 1) / q;
    const offset_t cols_p = (n + p - 1) / p;
    FootprintTerms t;
    t.x_part = rows_q * f;
    t.theta_part = cols_p * f;
    t.r_block = 2 * nnz / (static_cast<offset_t>(p) * q) + rows_q + 1;
    t.hermitian = rows_q * f * f;
    t.rhs = rows_q * f;
    t.headroom = headroom;
    return t;
}

/**
 * Pick the cheapest feasible (p, q) for the footprint inequality. Search
 * order: p = 1 first (the scale-up path degenerates to the single-worker
 * kernel); otherwise start from the smallest p whose theta partition fits
 * half the capacity and grow p up to the worker count. For each p the
 * smallest feasible q is found by bisection, which is sound because every
 * footprint term is non-increasing in q. The q = 1 evaluation is always
 * recorded in `attempts` so reports can show why a single row partition
 * fails.
 */
inline PartitionPlan plan_partition(offset_t m, offset_t n, offset_t nnz, int f,
                                    const Topology& topo, offset_t headroom) {
    if (m < 1 || n < 1 || f < 1) throw InputError("dimensions and rank must be >= 1");
    if (nnz < 0) throw InputError("nnz must be >= 0");
    detail::validate_topology(topo);
    if (headroom < 0 || headroom >= topo.capacity)
        throw InputError("headroom must lie in [0, capacity)");
    if (f > 0 && m > std::numeric_limits<offset_t>::max() / f / f)
        throw InputError("dimensions too large for footprint arithmetic");

    PartitionPlan plan;
    plan.headroom = headroom;

    const auto eval = [&](int p, int q) {
        PlanAttempt a;
        a.p = p;
        a.q = q;
        a.terms = footprint_terms(m, n, nnz, f, p, q, headroom);
        a.feasible = a.terms.total() < topo.capacity;
        return a;
    };

    const auto try_p = [&](int p) -> std::optional<PlanAttempt> {
        const PlanAttempt at_one = eval(p, 1);
        plan.attempts.push_back(at_one);
        if (at_one.feasible) return at_one;
        const offset_t q_max = m;
        if (q_max < 2) return std::nullopt;
        const PlanAttempt at_max = eval(p, static_cast<int>(std::min<offset_t>(
                                               q_max, std::numeric_limits<int>::max())));
        if (!at_max.feasible) {
            plan.attempts.push_back(at_max);
            return std::nullopt;
        }
        offset_t lo = 2, hi = at_max.q;
        while (lo < hi) {
            const offset_t mid = lo + (hi - lo) / 2;
            if (eval(p, static_cast<int>(mid)).feasible)
                hi = mid;
            else
                lo = mid + 1;
        }
        const PlanAttempt chosen = eval(p, static_cast<int>(lo));
        plan.attempts.push_back(chosen);
        return chosen;
    };

    std::optional<PlanAttempt> found = try_p(1);
    if (!found && topo.workers >= 2 && n >= 2) {
        const offset_t half = topo.capacity / 2;
        const offset_t p_half = half > 0 ? (n * f + half - 1) / half : topo.workers;
        const int p_start = static_cast<int>(
            std::clamp<offset_t>(p_half, 2, std::min<offset_t>(topo.workers, n)));
        const int p_end = static_cast<int>(std::min<offset_t>(topo.workers, n));
        for (int p = p_start; p <= p_end && !found; ++p) found = try_p(p);
    }

    if (!found) {
        const PlanAttempt* best = nullptr;
        for (const PlanAttempt& a : plan.attempts)
            if (!best || a.terms.total() < best->terms.total()) best = &a;
        std::string msg = "no feasible partition for " + std::to_string(topo.workers) +
                          " workers at capacity " + std::to_string(topo.capacity);
        if (best)
            msg += ": smallest footprint " + std::to_string(best->terms.total()) + " at p=" +
                   std::to_string(best->p) + " q=" + std::to_string(best->q) +
                   ", binding term " + binding_term(best->terms);
        throw CapacityError(msg);
    }

    plan.p = found->p;
    plan.q = found->q;
    plan.terms = found->terms;
    plan.per_worker_footprint = found->terms.total();
    return plan;
}

/// Cut a factor into row partitions along `cuts` (length parts+1), e.g.
/// theta into the per-worker partitions matching a grid's column cuts.
inline std::vector<FactorMatrix> split_factor(const FactorMatrix& whole,
                                              const std::vector<offset_t>& cuts) {
    if (cuts.size() < 2 || cuts.front() != 0 || cuts.back() != whole.rows)
        throw InputError("factor cuts must span [0, rows]");
    std::vector<FactorMatrix> parts;
    parts.reserve(cuts.size() - 1);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        FactorMatrix part(cuts[i + 1] - cuts[i], whole.f);
        std::copy(whole.entries.begin() + static_cast<std::ptrdiff_t>(
                                              cuts[i] * static_cast<offset_t>(whole.f)),
                  whole.entries.begin() + static_cast<std::ptrdiff_t>(
                                              cuts[i + 1] * static_cast<offset_t>(whole.f)),
                  part.entries.begin());
        parts.push_back(std::move(part));
    }
    return parts;
}

/// Worker i's share of the normal equations: the tiled kernel applied to
/// one grid block against that partition's theta rows. The lambda weight
/// counts only the block's nonzeros, so summing the p partials reproduces
/// exactly n_u * lambda * I in the reduced system.
inline HermitianBatch local_hermitian(const CsrMatrix& block, const FactorMatrix& theta_part,
                                      const SolverConfig& cfg) {
    HermitianBatch out;
    out.resize(block.rows, theta_part.f);
    if (cfg.accumulate_double)
        detail::assemble_mo_rows<double>(block, theta_part, cfg, 0, block.rows, out);
    else
        detail::assemble_mo_rows<float>(block, theta_part, cfg, 0, block.rows, out);
    return out;
}

/**
 * Build the transfer plan for `scheme` over the topology's workers.
 *
 * one_phase: worker i receives slice i directly from every other worker;
 * p(p-1) transfers, all in phase1.
 *
 * two_phase: per slice i, each group reduces onto one holder (the
 * destination itself in its home group, a rotating member elsewhere), then
 * foreign holders send their group partial to the destination. Cross-group
 * traffic per slice drops from p - |own group| to (#groups - 1). With
 * equal-size groups the rotation keeps per-worker in/out counts within one
 * of each other in both phases.
 */
inline ReduceSchedule build_reduce_schedule(const Topology& topo, ReduceScheme scheme) {
    detail::validate_topology(topo);
    ReduceSchedule sched;
    sched.scheme = scheme;
    sched.workers = topo.workers;
    sched.groups = detail::normalize_groups(topo);

    if (scheme == ReduceScheme::one_phase) {
        for (int slice = 0; slice < topo.workers; ++slice)
            for (int src = 0; src < topo.workers; ++src)
                if (src != slice) sched.phase1.push_back({src, slice, slice});
        return sched;
    }

    if (sched.groups.size() < 2)
        throw InputError("two-phase reduction needs at least 2 worker groups");

    for (int slice = 0; slice < topo.workers; ++slice) {
        const int dst = slice;
        for (const auto& g : sched.groups) {
            const bool home = std::find(g.begin(), g.end(), dst) != g.end();
            const int holder =
                home ? dst : g[static_cast<std::size_t>(slice) % g.size()];
            for (int w : g)
                if (w != holder) sched.phase1.push_back({w, holder, slice});
            if (!home) sched.phase2.push_back({holder, dst, slice});
        }
    }
    return sched;
}

/**
 * Execute a reduction plan: returns p batches where batch i is slice i of
 * the elementwise sum of all parts. Additions run in double on per-worker
 * buffers with barrier semantics (each phase reads the pre-phase state),
 * incoming partials applied in ascending source order, so the result does
 * not depend on the physical thread count.
 */
inline std::vector<HermitianBatch> parallel_reduce(const std::vector<HermitianBatch>& parts,
                                                   const ReduceSchedule& sched, int threads = 1) {
    return detail::reduce_batches(parts, sched, threads);
}

/**
 * Scale-up update of X over a p-by-q grid: for each row partition j in
 * sequence, the p workers assemble local Hermitian partials in parallel,
 * reduce them per the schedule, solve their slice, and write their slice
 * of X^(j). Numerically equal to the single-worker update (bit-equal for
 * p = q = 1 with double accumulation) and independent of the physical
 * thread count.
 */
inline FactorMatrix su_als_update_x(const GridPartition& grid,
                                    const std::vector<FactorMatrix>& theta_parts,
                                    const Topology& topo, ReduceScheme scheme,
                                    const SolverConfig& cfg) {
    detail::validate_topology(topo);
    if (topo.workers != grid.p)
        throw InputError("topology workers (" + std::to_string(topo.workers) +
                         ") must equal grid column partitions p (" + std::to_string(grid.p) + ")");
    if (static_cast<int>(theta_parts.size()) != grid.p)
        throw InputError("expected one theta partition per column block");
    int f = 0;
    for (int i = 0; i < grid.p; ++i) {
        const FactorMatrix& part = theta_parts[static_cast<std::size_t>(i)];
        const offset_t want = grid.col_cuts[static_cast<std::size_t>(i) + 1] -
                              grid.col_cuts[static_cast<std::size_t>(i)];
        if (part.rows != want)
            throw InputError("theta partition " + std::to_string(i) + " has " +
                             std::to_string(part.rows) + " rows, column cut wants " +
                             std::to_string(want));
        if (i == 0)
            f = part.f;
        else if (part.f != f)
            throw InputError("theta partitions disagree on rank");
    }

    offset_t nnz = 0;
    for (const CsrMatrix& b : grid.blocks) nnz += b.nnz();
    const FootprintTerms terms =
        footprint_terms(grid.rows, grid.cols, nnz, f, grid.p, grid.q, 0);
    if (terms.total() >= topo.capacity)
        throw CapacityError("per-worker footprint " + std::to_string(terms.total()) +
                            " exceeds capacity " + std::to_string(topo.capacity) +
                            ", binding term " + binding_term(terms));

    const ReduceSchedule sched = build_reduce_schedule(topo, scheme);
    const int physical = topo.threads > 0 ? topo.threads : topo.workers;

    // In double mode the per-worker partials stay double through the
    // reduction and are rounded to float once, at the solve boundary: the
    // same single rounding the unpartitioned kernel performs. Partitioning
    // then perturbs A_u only by double reassociation, not by per-partial
    // float rounding, which the solve would amplify by A_u's conditioning.
    const auto run_grid = [&](auto& parts) {
        using Batch = std::remove_reference_t<decltype(parts[0])>;
        FactorMatrix x(grid.rows, f);
        for (int j = 0; j < grid.q; ++j) {
            parallel_for(physical, 0, grid.p, 1, [&](offset_t ib, offset_t ie) {
                for (offset_t i = ib; i < ie; ++i) {
                    SolverConfig local = cfg;
                    local.threads = 1;
                    const CsrMatrix& block = grid.block(static_cast<int>(i), j);
                    Batch& part = parts[static_cast<std::size_t>(i)];
                    part.resize(block.rows, f);
                    if (cfg.accumulate_double)
                        detail::assemble_mo_rows<double>(block,
                                                         theta_parts[static_cast<std::size_t>(i)],
                                                         local, 0, block.rows, part);
                    else
                        detail::assemble_mo_rows<float>(block,
                                                        theta_parts[static_cast<std::size_t>(i)],
                                                        local, 0, block.rows, part);
                }
            });
            // The parallel_for join is the synchronization barrier between
            // local assembly and the reduction.
            const std::vector<Batch> slices = detail::reduce_batches(parts, sched, physical);

            const offset_t part_rows = parts[0].count;
            const std::vector<offset_t> cuts = detail::slice_cuts(part_rows, grid.p);
            const offset_t j0 = grid.row_cuts[static_cast<std::size_t>(j)];
            parallel_for(physical, 0, grid.p, 1, [&](offset_t ib, offset_t ie) {
                for (offset_t i = ib; i < ie; ++i) {
                    const Batch& slice = slices[static_cast<std::size_t>(i)];
                    HermitianBatch rounded;
                    rounded.resize(slice.count, slice.f);
                    for (std::size_t e = 0; e < slice.a.size(); ++e)
                        rounded.a[e] = static_cast<real_t>(slice.a[e]);
                    for (std::size_t e = 0; e < slice.b.size(); ++e)
                        rounded.b[e] = static_cast<real_t>(slice.b[e]);
                    real_t* dst =
                        x.entries.data() +
                        static_cast<std::size_t>(j0 + cuts[static_cast<std::size_t>(i)]) *
                            static_cast<std::size_t>(f);
                    detail::batch_solve_into(rounded, dst, BreakdownPolicy::fail, 1);
                }
            });
        }
        return x;
    };

    if (cfg.accumulate_double) {
        std::vector<detail::BatchD> parts(static_cast<std::size_t>(grid.p));
        return run_grid(parts);
    }
    std::vector<HermitianBatch> parts(static_cast<std::size_t>(grid.p));
    return run_grid(parts);
}

}  // namespace alskit
