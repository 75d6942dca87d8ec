// Copyright 2026 The alskit Authors - All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// Umbrella header pulling in the whole library.

#include "alskit/common.hpp"     // IWYU pragma: export
#include "alskit/config.hpp"     // IWYU pragma: export
#include "alskit/dataio.hpp"     // IWYU pragma: export
#include "alskit/driver.hpp"     // IWYU pragma: export
#include "alskit/factor.hpp"     // IWYU pragma: export
#include "alskit/parallel.hpp"   // IWYU pragma: export
#include "alskit/solver.hpp"     // IWYU pragma: export
#include "alskit/sparse.hpp"     // IWYU pragma: export
#include "alskit/thread_pool.hpp"  // IWYU pragma: export
