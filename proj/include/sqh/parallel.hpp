#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sqh {

// Runs f(i) for i in [0, n) on up to `jobs` threads. Work items must write to
// disjoint outputs; the first exception is rethrown after all threads join.
template<typename F>
void parallelFor(int jobs, std::size_t n, F&& f)
{
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  const std::size_t count = std::min<std::size_t>(std::size_t(jobs), n);
  for (std::size_t w = 0; w < count; ++w)
    pool.emplace_back([&, w] {
      (void)w;
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          f(i);
        } catch (...) {
          if (!failed.exchange(true))
            error = std::current_exception();
        }
      }
    });
  for (auto& th : pool)
    th.join();
  if (error)
    std::rethrow_exception(error);
}

}  // namespace sqh
