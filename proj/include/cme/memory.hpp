#pragma once

#include <cstddef>
#include <vector>

#include "cme/matching.hpp"
#include "cme/types.hpp"

namespace cme {

// Per-frame telemetry of a memory update. Every query pixel lands in exactly
// one of merged / expanded / discarded. `evicted_count` is non-zero only for
// the capped all-frames baseline, so
//   bank_size_after = bank_size_before + expanded_count - evicted_count.
struct UpdateReport {
  std::size_t merged_count = 0;
  std::size_t expanded_count = 0;
  std::size_t discarded_count = 0;
  std::size_t evicted_count = 0;
  std::size_t bank_size_before = 0;
  std::size_t bank_size_after = 0;
  double avg_threshold = 0.0;

  bool operator==(const UpdateReport&) const = default;
};

struct MaxCorrelation {
  std::vector<double> value;       // Re(i)
  std::vector<std::size_t> index;  // argmax, lowest index on ties
};

struct UpdateResult {
  MemoryBank bank;
  UpdateReport report;
};

// One entry per pixel with a non-zero normalized key. The resulting entries
// form the bank's protected initial block. EmptyBankError if none qualify.
MemoryBank init_memory(const FeatureMap& features, const Mask& fg, const Mask& bg);

MaxCorrelation max_correlations(const AffinityMatrix& a);

// 1 / (2e) * mean(Re): the lower bound for expanding a pixel into memory.
double expansion_threshold(const std::vector<double>& max_values);

// Compact update. `a` must be the affinity between this exact query and bank.
// Pixels with Re >= zeta are blended into their best entry (sequentially in
// pixel order, key re-normalized); pixels with threshold <= Re < zeta are
// appended after all merges; the rest are dropped. Zero-norm query pixels are
// never appended.
UpdateResult cme_update(MemoryBank bank, const FeatureMap& query, const Mask& fg, const Mask& bg,
                        const AffinityMatrix& a, const CmeConfig& cfg);

// InitialOnly leaves the bank as is; AllFrames appends every usable pixel and
// then evicts the oldest non-initial entries beyond cfg.all_frames_cap.
UpdateResult baseline_update(MemoryBank bank, const FeatureMap& query, const Mask& fg,
                             const Mask& bg, const CmeConfig& cfg);

// Dispatch on cfg.strategy.
UpdateResult update_memory(MemoryBank bank, const FeatureMap& query, const Mask& fg,
                           const Mask& bg, const AffinityMatrix& a, const CmeConfig& cfg);

}  // namespace cme
