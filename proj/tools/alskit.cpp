// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

// alskit command line: train / plan / gen-synth / eval.
//
// Option precedence: --config supplies a base RunConfig and any flag given
// on the command line overrides the file value. Exit codes classify
// failures: 2 input, 3 capacity, 4 numerical, 5 io, 1 anything else; every
// failure prints one `error (<category>): <message>` line to stderr.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <string>

#include "alskit/alskit.hpp"

namespace {

int exit_code_for(const alskit::Error& e) {
    switch (e.category()) {
        case alskit::Error::Category::input: return 2;
        case alskit::Error::Category::capacity: return 3;
        case alskit::Error::Category::numerical: return 4;
        case alskit::Error::Category::io: return 5;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"alskit: parallel alternating-least-squares matrix factorization"};
    app.require_subcommand(1);

    // ---- train ------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Run ALS training");
    std::string t_config, t_data, t_format, t_accumulate, t_groups, t_reduce, t_ckpt, t_metrics;
    std::int64_t t_rows = 0, t_cols = 0, t_batch_rows = 0, t_capacity = 0, t_headroom = 0;
    std::uint64_t t_seed = 0;
    double t_holdout = 0.0, t_lambda = 0.0;
    int t_f = 0, t_iterations = 0, t_bin = 0, t_threads = 0, t_workers = 0;
    int t_force_p = 0, t_force_q = 0;
    bool t_resume = false;
    train->add_option("--config", t_config, "Flat key=value config file; flags override it");
    train->add_option("--data", t_data, "Ratings file");
    train->add_option("--format", t_format, "triplet_text | movielens | binary_cache");
    train->add_option("--rows", t_rows, "Declared row count (0 = infer)");
    train->add_option("--cols", t_cols, "Declared column count (0 = infer)");
    train->add_option("--holdout", t_holdout, "Held-out fraction for the test split");
    train->add_option("--f", t_f, "Latent rank");
    train->add_option("--lambda", t_lambda, "Regularization weight");
    train->add_option("--iterations", t_iterations, "ALS iterations");
    train->add_option("--bin", t_bin, "Column-tile width of the assembly kernel");
    train->add_option("--batch-rows", t_batch_rows, "Rows per solve batch");
    train->add_option("--seed", t_seed, "Run seed");
    train->add_option("--accumulate", t_accumulate, "Accumulator precision: double | float");
    train->add_option("--threads", t_threads, "Physical threads (0 = hardware)");
    train->add_option("--workers", t_workers, "Logical workers (simulated devices)");
    train->add_option("--groups", t_groups, "Worker groups, e.g. \"0,1;2,3\"");
    train->add_option("--capacity", t_capacity, "Per-worker capacity in scalar units (0 = unlimited)");
    train->add_option("--headroom", t_headroom, "Planner headroom (-1 = capacity/24)");
    train->add_option("--reduce", t_reduce, "Reduction scheme: one-phase | two-phase");
    train->add_option("--force-p", t_force_p, "Force the column partition count (testing aid)");
    train->add_option("--force-q", t_force_q, "Force the row partition count (testing aid)");
    train->add_option("--checkpoint-dir", t_ckpt, "Directory for per-iteration checkpoints");
    train->add_option("--metrics", t_metrics, "Metrics CSV output path");
    train->add_flag("--resume", t_resume, "Resume from the newest checkpoint");
    train->callback([&] {
        alskit::RunConfig cfg;
        if (!t_config.empty()) cfg = alskit::load_config(t_config);
        auto set = [&](const char* name, auto fn) {
            if (train->count(name) > 0) fn();
        };
        set("--data", [&] { cfg.data = t_data; });
        set("--format", [&] { cfg.format = alskit::ratings_format_from_name(t_format); });
        set("--rows", [&] { cfg.rows = t_rows; });
        set("--cols", [&] { cfg.cols = t_cols; });
        set("--holdout", [&] { cfg.holdout = t_holdout; });
        set("--f", [&] { cfg.f = t_f; });
        set("--lambda", [&] { cfg.lambda = t_lambda; });
        set("--iterations", [&] { cfg.iterations = t_iterations; });
        set("--bin", [&] { cfg.bin = t_bin; });
        set("--batch-rows", [&] { cfg.batch_rows = t_batch_rows; });
        set("--seed", [&] { cfg.seed = t_seed; });
        set("--accumulate", [&] {
            if (t_accumulate == "double") cfg.accumulate_double = true;
            else if (t_accumulate == "float") cfg.accumulate_double = false;
            else
                throw alskit::InputError("unknown accumulate mode '" + t_accumulate +
                                         "' (expected double or float)");
        });
        set("--threads", [&] { cfg.threads = t_threads; });
        set("--workers", [&] { cfg.workers = t_workers; });
        set("--groups", [&] { cfg.groups = t_groups; });
        set("--capacity", [&] { cfg.capacity = t_capacity; });
        set("--headroom", [&] { cfg.headroom = t_headroom; });
        set("--reduce", [&] { cfg.reduce = alskit::reduce_scheme_from_name(t_reduce); });
        set("--force-p", [&] { cfg.force_p = t_force_p; });
        set("--force-q", [&] { cfg.force_q = t_force_q; });
        set("--checkpoint-dir", [&] { cfg.checkpoint_dir = t_ckpt; });
        set("--metrics", [&] { cfg.metrics = t_metrics; });
        if (t_resume) cfg.resume = true;

        const alskit::TrainResult res = alskit::train_run(cfg);
        for (const alskit::IterationRow& row : res.rows)
            std::printf("iteration %d: train_J=%.8g test_RMSE=%.8g (%.3fs)\n", row.iteration,
                        row.train_j, row.test_rmse, row.wall_seconds);
        std::printf("trained %zu iteration(s), grid p=%d q=%d\n", res.rows.size(), res.p, res.q);
        if (!cfg.metrics.empty()) std::printf("metrics: %s\n", cfg.metrics.c_str());
    });

    // ---- plan -------------------------------------------------------------
    auto* plan = app.add_subcommand("plan", "Print the partition plan for a problem shape");
    std::int64_t p_m = 0, p_n = 0, p_nnz = 0, p_capacity = 0, p_headroom = -1;
    int p_f = 0, p_workers = 1;
    std::string p_groups;
    plan->add_option("--m", p_m, "Row count")->required();
    plan->add_option("--n", p_n, "Column count")->required();
    plan->add_option("--nnz", p_nnz, "Nonzero count")->required();
    plan->add_option("--f", p_f, "Latent rank")->required();
    plan->add_option("--workers", p_workers, "Available workers");
    plan->add_option("--capacity", p_capacity, "Per-worker capacity in scalar units (0 = unlimited)");
    plan->add_option("--headroom", p_headroom, "Planner headroom (-1 = capacity/24)");
    plan->add_option("--groups", p_groups, "Worker groups, e.g. \"0,1;2,3\"");
    plan->callback([&] {
        alskit::Topology topo;
        topo.workers = p_workers;
        topo.capacity =
            p_capacity > 0 ? p_capacity : std::numeric_limits<alskit::offset_t>::max();
        topo.groups = alskit::parse_groups(p_groups);
        const alskit::offset_t headroom =
            p_headroom >= 0 ? p_headroom : (p_capacity > 0 ? p_capacity / 24 : 0);
        const alskit::PartitionPlan result =
            alskit::plan_partition(p_m, p_n, p_nnz, p_f, topo, headroom);
        std::fputs(alskit::describe_plan(result).c_str(), stdout);
    });

    // ---- gen-synth --------------------------------------------------------
    auto* gen = app.add_subcommand("gen-synth", "Duplicate a base dataset into a binary cache");
    std::string g_base, g_out, g_format;
    std::int64_t g_horiz = 1, g_vert = 1, g_rows = 0, g_cols = 0;
    gen->add_option("base", g_base, "Base ratings file")->required();
    gen->add_option("out", g_out, "Output cache path")->required();
    gen->add_option("--horiz", g_horiz, "Duplications along rows");
    gen->add_option("--vert", g_vert, "Duplications along columns");
    gen->add_option("--format", g_format, "Base file format");
    gen->add_option("--rows", g_rows, "Declared base row count (0 = infer)");
    gen->add_option("--cols", g_cols, "Declared base column count (0 = infer)");
    gen->callback([&] {
        alskit::RatingsFile base{g_base,
                                 g_format.empty() ? alskit::RatingsFormat::triplet_text
                                                  : alskit::ratings_format_from_name(g_format),
                                 g_rows, g_cols};
        const alskit::GenSynthResult out = alskit::gensynth_run(base, g_horiz, g_vert, g_out);
        std::printf("wrote %s: %lld x %lld, nnz=%lld\n", g_out.c_str(),
                    static_cast<long long>(out.rows), static_cast<long long>(out.cols),
                    static_cast<long long>(out.nnz));
    });

    // ---- eval -------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Score the newest checkpoints on a test file");
    std::string e_ckpt, e_test, e_format;
    eval->add_option("--checkpoint-dir", e_ckpt, "Checkpoint directory")->required();
    eval->add_option("--test", e_test, "Held-out ratings file")->required();
    eval->add_option("--format", e_format, "Test file format");
    eval->callback([&] {
        alskit::RatingsFile tf{e_test, e_format.empty()
                                           ? alskit::RatingsFormat::triplet_text
                                           : alskit::ratings_format_from_name(e_format)};
        const alskit::EvalResult res = alskit::eval_run(e_ckpt, tf);
        std::printf("%.6f\n", res.rmse_value);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const alskit::Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", e.category_name(), e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
