#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace sglscv {

enum class Exec { serial, parallel };

/// fn(i) for i in [0, n). The parallel branch uses an OpenMP dynamic loop;
/// the first exception thrown by any iteration is rethrown on return.
template <class F>
void for_each_index(std::size_t n, Exec ex, F&& fn) {
  if (ex == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr err;
  std::mutex mu;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

int worker_count();

}  // namespace sglscv
