// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Run orchestration shared by the CLI and the tests: load, split, plan,
 * iterate, checkpoint, and emit metrics.
 *
 * A training iteration t (1-based) updates X then Theta, checkpointing each
 * half as it completes, so the newest checkpoint is either Theta@t (the
 * iteration finished) or X@t (the run died in the middle). Resume restores
 * the newest state, completes a dangling X by recomputing Theta@t, and
 * continues at t+1; with a fixed seed the resumed factors match an
 * uninterrupted run.
 *
 * Metrics are CSV, one flushed row per iteration: iteration, wall_seconds,
 * train_J, test_RMSE. train_J and test_RMSE are printed with %.17g and are
 * bit-identical across worker and thread counts under double accumulation;
 * wall_seconds is a measurement and is not reproducible. A
 * `# baseline_rmse=` comment after the header records the global-mean
 * predictor scored on the same test split.
 */

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "alskit/common.hpp"
#include "alskit/config.hpp"
#include "alskit/dataio.hpp"
#include "alskit/factor.hpp"
#include "alskit/parallel.hpp"
#include "alskit/solver.hpp"
#include "alskit/sparse.hpp"

namespace alskit {

/// One metrics row as recorded in the CSV.
struct IterationRow {
    int iteration = 0;
    double wall_seconds = 0.0;
    double train_j = 0.0;
    double test_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    FactorMatrix x;
    FactorMatrix theta;
    std::vector<IterationRow> rows;  // rows emitted by this process
    double baseline_rmse = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t digest = 0;
    int start_iteration = 1;  // first iteration this process executed
    int p = 1;                // effective grid of the X update
    int q = 1;
};

namespace detail {

/// Drop workers >= p from a group layout; emptied groups vanish. Applied
/// when the planner selects fewer partitions than configured workers.
inline std::vector<std::vector<int>> restrict_groups(const std::vector<std::vector<int>>& groups,
                                                     int p) {
    std::vector<std::vector<int>> out;
    for (const std::vector<int>& g : groups) {
        std::vector<int> keep;
        for (int w : g)
            if (w < p) keep.push_back(w);
        if (!keep.empty()) out.push_back(std::move(keep));
    }
    return out;
}

/// Global-mean predictor fitted on the training values, scored on the test
/// split. The floor any factorization has to beat.
inline double baseline_rmse_of(const CsrMatrix& train, std::span<const Triplet> test) {
    if (test.empty()) return std::numeric_limits<double>::quiet_NaN();
    double mean = 0.0;
    for (real_t v : train.values) mean += static_cast<double>(v);
    if (train.nnz() > 0) mean /= static_cast<double>(train.nnz());
    double sq = 0.0;
    for (const Triplet& t : test) {
        const double d = static_cast<double>(t.value) - mean;
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(test.size()));
}

}  // namespace detail

/**
 * Execute a full training run per `cfg`. The optional callback fires after
 * each completed iteration (both halves checkpointed, metrics row written);
 * returning false stops the run early, which also emulates an interruption
 * for resume testing.
 */
inline TrainResult train_run(const RunConfig& cfg, const IterationCallback& after_iteration = {}) {
    validate_config(cfg);
    if (cfg.data.empty()) throw InputError("no dataset configured (set data=PATH)");
    const CsrMatrix r = load_ratings({cfg.data, cfg.format, cfg.rows, cfg.cols});
    if (r.rows < 1 || r.cols < 1) throw InputError("dataset " + cfg.data + " is empty");
    const std::uint64_t digest = run_digest(cfg, r.rows, r.cols, r.nnz());
    const SplitResult split = split_train_test(r, cfg.holdout, detail::mix_seed(cfg.seed, 2));
    const CsrMatrix& train = split.train;
    const CsrMatrix rt = transpose_of(csr_to_csc(train));  // theta-side view of R

    const offset_t capacity =
        cfg.capacity > 0 ? cfg.capacity : std::numeric_limits<offset_t>::max();
    const auto groups_all = parse_groups(cfg.groups);
    if (cfg.reduce == ReduceScheme::two_phase && groups_all.size() < 2)
        throw InputError("two-phase reduction needs at least two worker groups");

    // One half-update side: the X pass runs on `train`, the Theta pass on its
    // transpose. Each side gets its own plan, grid and reduce setup.
    struct Side {
        int p = 1;
        int q = 1;
        bool use_su = false;
        GridPartition grid;
        Topology topo;
        ReduceScheme scheme = ReduceScheme::one_phase;
    };
    auto make_side = [&](const CsrMatrix& mat) {
        Side s;
        if (cfg.force_p > 0) {
            s.p = cfg.force_p;
            s.q = cfg.force_q;
        } else {
            Topology plan_topo;
            plan_topo.workers = cfg.workers;
            plan_topo.capacity = capacity;
            plan_topo.groups = groups_all;
            const PartitionPlan plan = plan_partition(mat.rows, mat.cols, mat.nnz(), cfg.f,
                                                      plan_topo, effective_headroom(cfg));
            s.p = plan.p;
            s.q = plan.q;
        }
        s.use_su = cfg.workers > 1 || s.p > 1 || s.q > 1;
        if (s.use_su) {
            s.grid = grid_partition(mat, s.p, s.q);
            s.topo.workers = s.p;
            s.topo.threads = cfg.threads;
            s.topo.capacity = capacity;
            s.topo.groups = detail::restrict_groups(groups_all, s.p);
            // A shrunken worker set may leave too few groups for two-phase;
            // fall back to the scheme that needs no group structure.
            s.scheme = (cfg.reduce == ReduceScheme::two_phase && s.topo.groups.size() >= 2)
                           ? ReduceScheme::two_phase
                           : ReduceScheme::one_phase;
            if (s.scheme == ReduceScheme::one_phase) s.topo.groups.clear();
        }
        return s;
    };
    const Side side_x = make_side(train);
    const Side side_t = make_side(rt);

    const SolverConfig scfg = solver_config(cfg);
    auto half_update = [&](const Side& s, const CsrMatrix& plain, const FactorMatrix& other) {
        if (!s.use_su) return update_x(plain, other, scfg);
        return su_als_update_x(s.grid, split_factor(other, s.grid.col_cuts), s.topo, s.scheme,
                               scfg);
    };

    TrainResult result;
    result.digest = digest;
    result.p = side_x.p;
    result.q = side_x.q;
    result.baseline_rmse = detail::baseline_rmse_of(train, split.test);

    FactorMatrix x = random_factor(train.rows, cfg.f, cfg.seed);
    FactorMatrix theta = random_factor(train.cols, cfg.f, detail::mix_seed(cfg.seed, 1));

    // Resume: adopt the newest compatible checkpoint state.
    const bool use_ckpt = !cfg.checkpoint_dir.empty();
    const std::filesystem::path ckpt_dir = cfg.checkpoint_dir;
    int completed = 0;
    bool dangling_x = false;
    if (cfg.resume && use_ckpt) {
        if (auto latest = restore_latest(ckpt_dir, digest)) {
            completed = latest->iteration;
            if (latest->which == FactorKind::theta) {
                theta = std::move(latest->factor);
                Checkpoint cx =
                    read_checkpoint(checkpoint_path(ckpt_dir, completed, FactorKind::x));
                if (cx.digest != digest)
                    throw InputError("checkpoint config digest mismatch at iteration " +
                                     std::to_string(completed));
                x = std::move(cx.factor);
            } else {
                x = std::move(latest->factor);
                dangling_x = true;  // Theta@completed must be recomputed
            }
        }
    }
    result.start_iteration = dangling_x ? completed : completed + 1;

    std::ofstream metrics;
    if (!cfg.metrics.empty()) {
        std::error_code ec;
        const bool append = cfg.resume && std::filesystem::exists(cfg.metrics, ec) &&
                            std::filesystem::file_size(cfg.metrics, ec) > 0;
        metrics.open(cfg.metrics, append ? std::ios::app : std::ios::trunc);
        if (!metrics) throw IoError("cannot open metrics file " + cfg.metrics);
        if (!append) {
            metrics << "iteration,wall_seconds,train_J,test_RMSE\n";
            if (cfg.iterations > 0)
                metrics << "# baseline_rmse=" << detail::format_real(result.baseline_rmse)
                        << '\n';
            metrics.flush();
        }
    }

    std::optional<CheckpointWriter> writer;
    if (use_ckpt) writer.emplace(ckpt_dir);
    auto snapshot = [&](int iteration, FactorKind which, const FactorMatrix& factor) {
        if (writer) writer->submit({iteration, which, factor, digest});
    };

    const auto run_start = std::chrono::steady_clock::now();
    auto emit_row = [&](int iteration) {
        IterationRow row;
        row.iteration = iteration;
        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
        row.train_j = loss(train, x, theta, cfg.lambda);
        row.test_rmse = split.test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                           : rmse(split.test, x, theta);
        result.rows.push_back(row);
        if (metrics.is_open()) {
            char head[64];
            std::snprintf(head, sizeof head, "%d,%.3f,", row.iteration, row.wall_seconds);
            metrics << head << detail::format_real(row.train_j) << ','
                    << detail::format_real(row.test_rmse) << '\n';
            metrics.flush();
        }
    };

    bool stopped = false;
    if (dangling_x) {  // finish the interrupted iteration first
        theta = half_update(side_t, rt, x);
        snapshot(completed, FactorKind::theta, theta);
        emit_row(completed);
        if (after_iteration && !after_iteration(completed, x, theta)) stopped = true;
    }
    for (int t = completed + 1; !stopped && t <= cfg.iterations; ++t) {
        x = half_update(side_x, train, theta);
        snapshot(t, FactorKind::x, x);
        theta = half_update(side_t, rt, x);
        snapshot(t, FactorKind::theta, theta);
        emit_row(t);
        if (after_iteration && !after_iteration(t, x, theta)) break;
    }
    if (writer) writer->flush();

    result.x = std::move(x);
    result.theta = std::move(theta);
    return result;
}

/// Outcome of evaluating the newest checkpoints against a test file.
struct EvalResult {
    double rmse_value = 0.0;
    int iteration_x = 0;
    int iteration_theta = 0;
};

/// Score the newest X and Theta checkpoints on a held-out ratings file.
inline EvalResult eval_run(const std::filesystem::path& checkpoint_dir,
                           const RatingsFile& test_file) {
    auto cx = restore_latest_of(checkpoint_dir, FactorKind::x);
    auto ct = restore_latest_of(checkpoint_dir, FactorKind::theta);
    if (!cx || !ct)
        throw InputError("checkpoint directory " + checkpoint_dir.string() +
                         " needs both an X and a Theta checkpoint");
    if (cx->factor.f != ct->factor.f)
        throw InputError("checkpoint rank mismatch: X has f=" + std::to_string(cx->factor.f) +
                         ", Theta has f=" + std::to_string(ct->factor.f));
    if (cx->digest != ct->digest)
        throw InputError("X and Theta checkpoints come from different runs (digest mismatch)");
    const CsrMatrix test = load_ratings(test_file);
    const std::vector<Triplet> triplets = csr_to_triplets(test);
    EvalResult out;
    out.iteration_x = cx->iteration;
    out.iteration_theta = ct->iteration;
    out.rmse_value = rmse(triplets, cx->factor, ct->factor);
    return out;
}

/// Human-readable plan dump: the chosen partition, every footprint term, and
/// each attempt the search evaluated.
inline std::string describe_plan(const PartitionPlan& plan) {
    std::ostringstream out;
    out << "plan: p=" << plan.p << " q=" << plan.q << '\n';
    const FootprintTerms& t = plan.terms;
    out << "  x_part     " << t.x_part << '\n';
    out << "  theta_part " << t.theta_part << '\n';
    out << "  r_block    " << t.r_block << '\n';
    out << "  hermitian  " << t.hermitian << '\n';
    out << "  rhs        " << t.rhs << '\n';
    out << "  headroom   " << t.headroom << '\n';
    out << "  total      " << t.total() << " (binding: " << binding_term(t) << ")\n";
    out << "considered:\n";
    for (const PlanAttempt& a : plan.attempts) {
        out << "  p=" << a.p << " q=" << a.q << ": total " << a.terms.total();
        if (a.feasible)
            out << " feasible\n";
        else
            out << " infeasible (binding: " << binding_term(a.terms) << ")\n";
    }
    return out.str();
}

struct GenSynthResult {
    offset_t rows = 0;
    offset_t cols = 0;
    offset_t nnz = 0;
};

/// Load a base dataset, duplicate it horiz-by-vert, and write the result as
/// a binary cache.
inline GenSynthResult gensynth_run(const RatingsFile& base_file, offset_t horiz, offset_t vert,
                                   const std::filesystem::path& out_path) {
    const CsrMatrix base = load_ratings(base_file);
    const CsrMatrix dup = duplicate_synthesize(base, horiz, vert);
    save_binary_cache(dup, out_path);
    return {dup.rows, dup.cols, dup.nnz()};
}

}  // namespace alskit
