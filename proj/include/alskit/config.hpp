// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Flat key=value run configuration: parsing, canonical serialization, and
 * the run digest stored in checkpoints.
 *
 * Serialization uses a fixed key order and %.17g for reals, so configs
 * round-trip bit-exactly and diff cleanly. The digest covers the fields that
 * define the mathematical run (dataset shape, rank, lambda, batching, seed,
 * holdout, accumulator width) and deliberately excludes iteration counts,
 * paths and execution topology: a checkpointed run may legitimately resume
 * with a different worker or thread count, or train for more iterations.
 */

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "alskit/common.hpp"
#include "alskit/dataio.hpp"
#include "alskit/parallel.hpp"
#include "alskit/solver.hpp"

namespace alskit {

/// Everything a run needs, independent of how it was assembled (file,
/// flags, or both). Sentinel conventions: rows/cols 0 = infer from data,
/// capacity 0 = unlimited, headroom -1 = capacity/24, force_p/force_q 0 =
/// let the planner decide.
struct RunConfig {
    // dataset
    std::string data;
    RatingsFormat format = RatingsFormat::triplet_text;
    offset_t rows = 0;
    offset_t cols = 0;
    double holdout = 0.1;
    // model
    int f = 8;
    double lambda = 0.05;
    int iterations = 10;
    int bin = 16;
    offset_t batch_rows = 4096;
    std::uint64_t seed = 42;
    bool accumulate_double = true;
    // execution
    int threads = 0;
    int workers = 1;
    std::string groups;
    offset_t capacity = 0;
    offset_t headroom = -1;
    ReduceScheme reduce = ReduceScheme::one_phase;
    int force_p = 0;
    int force_q = 0;
    // artifacts
    std::string checkpoint_dir;
    std::string metrics;
    bool resume = false;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline const char* ratings_format_name(RatingsFormat f) noexcept {
    switch (f) {
        case RatingsFormat::triplet_text: return "triplet_text";
        case RatingsFormat::movielens: return "movielens";
        case RatingsFormat::binary_cache: return "binary_cache";
    }
    return "triplet_text";
}

inline RatingsFormat ratings_format_from_name(const std::string& name) {
    if (name == "triplet_text") return RatingsFormat::triplet_text;
    if (name == "movielens") return RatingsFormat::movielens;
    if (name == "binary_cache") return RatingsFormat::binary_cache;
    throw InputError("unknown ratings format '" + name +
                     "' (expected triplet_text, movielens or binary_cache)");
}

inline const char* reduce_scheme_name(ReduceScheme s) noexcept {
    return s == ReduceScheme::one_phase ? "one-phase" : "two-phase";
}

inline ReduceScheme reduce_scheme_from_name(const std::string& name) {
    if (name == "one-phase") return ReduceScheme::one_phase;
    if (name == "two-phase") return ReduceScheme::two_phase;
    throw InputError("unknown reduce scheme '" + name + "' (expected one-phase or two-phase)");
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline long long parse_ll(const std::string& value, const std::string& key) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(value, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != value.size())
        throw InputError("config key '" + key + "' needs an integer, got '" + value + "'");
    return out;
}

inline std::uint64_t parse_u64(const std::string& value, const std::string& key) {
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(value, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != value.size() || value.find('-') != std::string::npos)
        throw InputError("config key '" + key + "' needs a non-negative integer, got '" + value +
                         "'");
    return out;
}

inline double parse_real(const std::string& value, const std::string& key) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != value.size())
        throw InputError("config key '" + key + "' needs a number, got '" + value + "'");
    return out;
}

inline bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw InputError("config key '" + key + "' needs true or false, got '" + value + "'");
}

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data") cfg.data = value;
    else if (key == "format") cfg.format = ratings_format_from_name(value);
    else if (key == "rows") cfg.rows = parse_ll(value, key);
    else if (key == "cols") cfg.cols = parse_ll(value, key);
    else if (key == "holdout") cfg.holdout = parse_real(value, key);
    else if (key == "f") cfg.f = static_cast<int>(parse_ll(value, key));
    else if (key == "lambda") cfg.lambda = parse_real(value, key);
    else if (key == "iterations") cfg.iterations = static_cast<int>(parse_ll(value, key));
    else if (key == "bin") cfg.bin = static_cast<int>(parse_ll(value, key));
    else if (key == "batch_rows") cfg.batch_rows = parse_ll(value, key);
    else if (key == "seed") cfg.seed = parse_u64(value, key);
    else if (key == "accumulate_double") cfg.accumulate_double = parse_bool(value, key);
    else if (key == "threads") cfg.threads = static_cast<int>(parse_ll(value, key));
    else if (key == "workers") cfg.workers = static_cast<int>(parse_ll(value, key));
    else if (key == "groups") cfg.groups = value;
    else if (key == "capacity") cfg.capacity = parse_ll(value, key);
    else if (key == "headroom") cfg.headroom = parse_ll(value, key);
    else if (key == "reduce") cfg.reduce = reduce_scheme_from_name(value);
    else if (key == "force_p") cfg.force_p = static_cast<int>(parse_ll(value, key));
    else if (key == "force_q") cfg.force_q = static_cast<int>(parse_ll(value, key));
    else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
    else if (key == "metrics") cfg.metrics = value;
    else if (key == "resume") cfg.resume = parse_bool(value, key);
    else throw InputError("unknown config key '" + key + "'");
}

}  // namespace detail

/// Parse a flat key=value config. '#' starts a comment; blank lines are
/// skipped; later entries override earlier ones.
inline RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream lines(text);
    std::string line;
    for (int line_no = 1; std::getline(lines, line); ++line_no) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config line " + std::to_string(line_no) +
                             ": expected key=value, got '" + line + "'");
        detail::apply_config_entry(cfg, detail::trim(line.substr(0, eq)),
                                   detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str());
}

/// Canonical serialization: fixed key order, reals in %.17g so a round trip
/// reproduces the config exactly.
inline std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "data=" << cfg.data << '\n';
    out << "format=" << ratings_format_name(cfg.format) << '\n';
    out << "rows=" << cfg.rows << '\n';
    out << "cols=" << cfg.cols << '\n';
    out << "holdout=" << detail::format_real(cfg.holdout) << '\n';
    out << "f=" << cfg.f << '\n';
    out << "lambda=" << detail::format_real(cfg.lambda) << '\n';
    out << "iterations=" << cfg.iterations << '\n';
    out << "bin=" << cfg.bin << '\n';
    out << "batch_rows=" << cfg.batch_rows << '\n';
    out << "seed=" << cfg.seed << '\n';
    out << "accumulate_double=" << (cfg.accumulate_double ? "true" : "false") << '\n';
    out << "threads=" << cfg.threads << '\n';
    out << "workers=" << cfg.workers << '\n';
    out << "groups=" << cfg.groups << '\n';
    out << "capacity=" << cfg.capacity << '\n';
    out << "headroom=" << cfg.headroom << '\n';
    out << "reduce=" << reduce_scheme_name(cfg.reduce) << '\n';
    out << "force_p=" << cfg.force_p << '\n';
    out << "force_q=" << cfg.force_q << '\n';
    out << "checkpoint_dir=" << cfg.checkpoint_dir << '\n';
    out << "metrics=" << cfg.metrics << '\n';
    out << "resume=" << (cfg.resume ? "true" : "false") << '\n';
    return out.str();
}

/// Parse a worker-group spec like "0,1;2,3": groups split on ';', members on
/// ','. An empty spec means a flat topology.
inline std::vector<std::vector<int>> parse_groups(const std::string& spec) {
    std::vector<std::vector<int>> groups;
    const std::string trimmed = detail::trim(spec);
    if (trimmed.empty()) return groups;
    std::istringstream group_stream(trimmed);
    std::string group;
    while (std::getline(group_stream, group, ';')) {
        std::vector<int> members;
        std::istringstream member_stream(group);
        std::string member;
        while (std::getline(member_stream, member, ',')) {
            member = detail::trim(member);
            if (member.empty()) throw InputError("empty worker id in groups spec '" + spec + "'");
            members.push_back(static_cast<int>(detail::parse_ll(member, "groups")));
        }
        if (members.empty()) throw InputError("empty group in groups spec '" + spec + "'");
        groups.push_back(std::move(members));
    }
    return groups;
}

/// Range checks shared by every front end; module-level preconditions do the
/// deeper validation.
inline void validate_config(const RunConfig& cfg) {
    if (cfg.f < 1) throw InputError("f must be at least 1");
    if (cfg.lambda < 0.0) throw InputError("lambda must be non-negative");
    if (cfg.iterations < 0) throw InputError("iterations must be non-negative");
    if (cfg.bin < 1) throw InputError("bin must be at least 1");
    if (cfg.batch_rows < 1) throw InputError("batch_rows must be at least 1");
    if (!(cfg.holdout > 0.0) || !(cfg.holdout < 1.0))
        throw InputError("holdout must lie strictly between 0 and 1");
    if (cfg.threads < 0) throw InputError("threads must be non-negative");
    if (cfg.workers < 1) throw InputError("workers must be at least 1");
    if (cfg.capacity < 0) throw InputError("capacity must be non-negative");
    if (cfg.headroom < -1) throw InputError("headroom must be -1 (auto) or non-negative");
    if (cfg.force_p < 0 || cfg.force_q < 0)
        throw InputError("force_p and force_q must be non-negative");
    if ((cfg.force_p > 0) != (cfg.force_q > 0))
        throw InputError("force_p and force_q must be set together");
    if (cfg.rows < 0 || cfg.cols < 0) throw InputError("rows and cols must be non-negative");
    parse_groups(cfg.groups);  // shape check; topology validation happens later
}

/// Planner headroom: explicit when set, otherwise 1/24 of capacity (about
/// 4%, enough for allocator slack and per-thread scratch).
inline offset_t effective_headroom(const RunConfig& cfg) {
    return cfg.headroom >= 0 ? cfg.headroom : cfg.capacity / 24;
}

/// Digest binding checkpoints to the run they came from. Mixes the dataset
/// shape with the math-defining config fields; see the header comment for
/// what is deliberately excluded.
inline std::uint64_t run_digest(const RunConfig& cfg, offset_t m, offset_t n, offset_t nnz) {
    std::ostringstream canon;
    canon << "alskit-run;m=" << m << ";n=" << n << ";nnz=" << nnz << ";f=" << cfg.f
          << ";lambda=" << detail::format_real(cfg.lambda) << ";bin=" << cfg.bin
          << ";batch_rows=" << cfg.batch_rows << ";seed=" << cfg.seed
          << ";holdout=" << detail::format_real(cfg.holdout)
          << ";accumulate_double=" << (cfg.accumulate_double ? 1 : 0);
    return detail::fnv1a64(canon.str());
}

/// The solver-facing slice of the run config.
inline SolverConfig solver_config(const RunConfig& cfg) {
    SolverConfig sc;
    sc.f = cfg.f;
    sc.lambda = cfg.lambda;
    sc.bin = cfg.bin;
    sc.batch_rows = cfg.batch_rows;
    sc.accumulate_double = cfg.accumulate_double;
    sc.threads = cfg.threads;
    sc.seed = cfg.seed;
    return sc;
}

}  // namespace alskit
