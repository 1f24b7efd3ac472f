// Copyright 2026 The mtlasd Authors.
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "mtlasd/parallel.hpp"

using mtlasd::parallel_for;
using mtlasd::worker_count;

TEST_SUITE("parallel") {
  TEST_CASE("every index runs exactly once on a valid worker") {
    std::vector<std::atomic<int>> hits(1000);
    std::atomic<bool> bad_worker{false};
    parallel_for(hits.size(), [&](std::size_t i, std::size_t w) {
      hits[i]++;
      if (w >= worker_count()) bad_worker = true;
    });
    for (const auto& h : hits) CHECK(h.load() == 1);
    CHECK_FALSE(bad_worker.load());
  }

  TEST_CASE("lowest failing index is rethrown") {
    try {
      parallel_for(50, [&](std::size_t i, std::size_t) {
        if (i == 7 || i == 30) throw std::runtime_error("index " + std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "index 7");
    }
  }

  TEST_CASE("empty range is a no-op") {
    parallel_for(0, [](std::size_t, std::size_t) { FAIL("called"); });
  }
}
