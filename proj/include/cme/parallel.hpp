#pragma once

#include <optional>

namespace cme {

// Thread count for parallel kernels. Without OpenMP these are no-ops and
// report 1.
void set_thread_count(int threads);
int thread_count();

// Reads CME_THREADS; a positive integer caps the worker count. Returns the
// value applied, or nullopt when unset. Throws ContractError if malformed.
std::optional<int> apply_thread_limit_from_env();

}  // namespace cme
