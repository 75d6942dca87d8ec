// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "alskit/common.hpp"

namespace alskit {

/// Resolve a thread-count knob: 0 means "use what the hardware offers".
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Fork-join parallel loop over [begin, end). Workers grab chunks of
/// `chunk` indices through a shared atomic cursor and call
/// fn(chunk_begin, chunk_end). With threads <= 1 the loop runs inline.
///
/// Callers must ensure chunks write disjoint state; under that contract the
/// result is independent of the thread count and of chunk scheduling.
inline void parallel_for(int threads, offset_t begin, offset_t end, offset_t chunk,
                         const std::function<void(offset_t, offset_t)>& fn) {
    if (begin >= end) return;
    if (chunk < 1) chunk = 1;
    threads = resolve_threads(threads);
    const offset_t total = end - begin;
    if (threads <= 1 || total <= chunk) {
        for (offset_t b = begin; b < end; b += chunk) fn(b, std::min(b + chunk, end));
        return;
    }

    std::atomic<offset_t> cursor{begin};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        try {
            while (true) {
                offset_t b = cursor.fetch_add(chunk, std::memory_order_relaxed);
                if (b >= end) break;
                fn(b, std::min(b + chunk, end));
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };

    const int spawned = static_cast<int>(std::min<offset_t>(threads, (total + chunk - 1) / chunk));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(spawned > 1 ? spawned - 1 : 0));
    for (int t = 1; t < spawned; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace alskit
