#include "cme/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <string>
#include <string_view>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cme/errors.hpp"

namespace cme {

void set_thread_count(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::optional<int> apply_thread_limit_from_env() {
  const char* raw = std::getenv("CME_THREADS");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string_view s(raw);
  int n = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc() || ptr != s.data() + s.size() || n <= 0) {
    throw ContractError("CME_THREADS must be a positive integer, got '" + std::string(s) + "'");
  }
  set_thread_count(n);
  return n;
}

}  // namespace cme
