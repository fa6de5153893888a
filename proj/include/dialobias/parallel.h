// Copyright 2026 The Dialobias Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DIALOBIAS_PARALLEL_H_
#define DIALOBIAS_PARALLEL_H_

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace dialobias {

// Runs fn(worker, begin, end) over contiguous slices of [0, n). Slices are a
// pure function of (n, threads), so per-slice outputs can be merged in slice
// order for deterministic results. The first exception thrown is rethrown.
template <typename Fn>
void parallel_slices(std::size_t n, int threads, Fn&& fn) {
  std::size_t workers = static_cast<std::size_t>(std::max(1, threads));
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t begin = n * w / workers;
    std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(w, begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Map-reduce over [0, n): each worker fills its own accumulator from make(),
// then accumulators are merged left to right with T::merge.
template <typename T, typename MakeFn, typename WorkFn>
T map_reduce(std::size_t n, int threads, MakeFn&& make, WorkFn&& work) {
  std::size_t workers = static_cast<std::size_t>(std::max(1, threads));
  workers = std::min(workers, std::max<std::size_t>(n, 1));
  std::vector<T> parts;
  parts.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) parts.push_back(make());
  parallel_slices(n, static_cast<int>(workers),
                  [&](std::size_t w, std::size_t begin, std::size_t end) { work(parts[w], begin, end); });
  T result = std::move(parts.front());
  for (std::size_t w = 1; w < parts.size(); ++w) result.merge(std::move(parts[w]));
  return result;
}

}  // namespace dialobias

#endif  // DIALOBIAS_PARALLEL_H_
