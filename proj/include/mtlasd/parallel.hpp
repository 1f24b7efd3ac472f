// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace mtlasd {

/// Worker threads used by parallel_for: MTLASD_THREADS if set, else the hardware count.
std::size_t worker_count();

/// Calls fn(i, worker) for every i in [0, n). Each index runs exactly once and
/// worker < worker_count(), so per-worker scratch state needs no locking.
/// Results depend only on i, never on scheduling. If calls throw, the exception
/// of the lowest failing index is rethrown; later indices may not have run.
void parallel_for(std::size_t n, const std::function<void(std::size_t i, std::size_t worker)>& fn);

}  // namespace mtlasd
