#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace oodkit {

/// out[i] = fn(i) for i in [0, n), either serially or with a static OpenMP
/// schedule. Each element is written by exactly one thread, so results do not
/// depend on the thread count. If any call throws, the exception of the
/// lowest failing index is rethrown after the loop.
template <typename Fn>
std::vector<double> map_indices(std::size_t n, bool parallel, Fn&& fn) {
  std::vector<double> out(n);
  if (!parallel) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::exception_ptr error;
  std::size_t error_index = n;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      out[idx] = fn(idx);
    } catch (...) {
#pragma omp critical(oodkit_map_error)
      {
        if (idx < error_index) {
          error_index = idx;
          error = std::current_exception();
        }
      }
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

/// Sets the OpenMP worker count; jobs == 0 keeps the runtime default.
void set_worker_count(int jobs);
int worker_count();

}  // namespace oodkit
