/*
 * Copyright 2026 The pfderiv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pfd {

/// Replicates per work unit. Fixed, so the reduction tree never depends on
/// the thread count.
inline constexpr std::size_t kReplicateChunk = 64;

/// 0 means "all hardware threads".
inline std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

/// Splits [0, count) into fixed chunks of `chunk` items, evaluates `work(begin, end)` for each
/// on up to `threads` workers and folds the results with `merge(acc, part)`
/// in chunk order. The first exception thrown by a worker is rethrown.
template <class Acc, class Work, class Merge>
Acc chunked_reduce(std::size_t count, std::size_t threads, Acc init, Work&& work, Merge&& merge,
                   std::size_t chunk = kReplicateChunk) {
  const std::size_t chunks = (count + chunk - 1) / chunk;
  std::vector<Acc> parts(chunks, init);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        const std::size_t b = c * chunk;
        parts[c] = work(b, std::min(count, b + chunk));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(chunks);
      }
    }
  };
  const std::size_t nt = std::max<std::size_t>(1, std::min(resolve_threads(threads), chunks));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  Acc acc = std::move(init);
  for (auto& p : parts) merge(acc, p);
  return acc;
}

}  // namespace pfd
