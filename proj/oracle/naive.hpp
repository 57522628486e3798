#pragma once

// Serial reference implementations. They depend on core types only and
// deliberately share no code with the parallel kernels they certify.

#include <cstddef>
#include <vector>

#include "cme/types.hpp"

namespace cme::oracle {

// Row-major rows x cols.
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

FeatureMap naive_normalize(const FeatureMap& fm);

Grid naive_affinity(const FeatureMap& query, const MemoryBank& bank);

struct Retrieved {
  Grid fg;
  Grid bg;
};
Retrieved naive_retrieve(const Grid& affinity, const MemoryBank& bank);

double naive_topk(std::vector<double> v, std::size_t k);

struct NaiveScores {
  std::vector<double> fg;
  std::vector<double> bg;
};
// Affinity, retrieval and top-K for a normalized query.
NaiveScores naive_similarity(const FeatureMap& query, const MemoryBank& bank, std::size_t k);

struct NaiveArgmax {
  std::vector<double> value;
  std::vector<std::size_t> index;
};
NaiveArgmax naive_argmax(const Grid& affinity);

struct TraceFrame {
  FeatureMap features;  // raw, normalized inside the trace
  Mask fg;              // bg = 1 - fg
};

struct TraceReport {
  std::size_t merged = 0;
  std::size_t expanded = 0;
  std::size_t discarded = 0;
  std::size_t evicted = 0;
  std::size_t size_before = 0;
  std::size_t size_after = 0;
  double avg_threshold = 0.0;
};

struct TraceResult {
  std::vector<TraceReport> reports;  // one per frame after the first
  std::vector<MemoryEntry> final_entries;
};

// Frame 0 initializes the memory; every later frame is matched against the
// current memory and then applied with cfg.strategy.
TraceResult naive_cme_trace(const std::vector<TraceFrame>& frames, const CmeConfig& cfg);

struct NaiveDflWeights {
  std::size_t channels = 0;
  std::size_t hidden = 0;
  std::vector<double> query_proj;  // hidden x channels
  std::vector<double> ref_proj;    // hidden x channels
  std::vector<double> value_proj;  // hidden x channels
  std::vector<double> fuse_proj;   // hidden x 2 hidden
};

FeatureMap naive_dfl_forward(const FeatureMap& query, const FeatureMap& reference,
                             const Mask& p1_fg, const NaiveDflWeights& w,
                             bool apply_posterior = true);

}  // namespace cme::oracle
