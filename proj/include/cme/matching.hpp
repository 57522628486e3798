#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cme/types.hpp"

namespace cme {

// Cosine similarities between query pixels (rows) and bank entries (cols).
struct AffinityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  AffinityMatrix() = default;
  AffinityMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

// Value-weighted affinities, one length-N row per query pixel.
struct RetrievedScores {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> fg;
  std::vector<double> bg;

  std::span<const double> fg_row(std::size_t i) const { return {fg.data() + i * cols, cols}; }
  std::span<const double> bg_row(std::size_t i) const { return {bg.data() + i * cols, cols}; }
};

struct ScoreMaps {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> fg;
  std::vector<double> bg;
};

struct SimilarityResult {
  ScoreMaps scores;
  AffinityMatrix affinity;
};

inline constexpr double kDegenerateNorm = 1e-12;

// Per-pixel L2 normalization. Pixels with norm below kDegenerateNorm come
// back as zero vectors; `degenerate` (if given) receives how many.
FeatureMap normalize_features(const FeatureMap& fm, std::size_t* degenerate = nullptr);

// A(i, j) = <query pixel i, key j>. Query must be normalized.
// DimensionError on channel mismatch, ContractError on an empty bank.
AffinityMatrix compute_affinity(const FeatureMap& query, const MemoryBank& bank);

// fg(i, j) = A(i, j) * fg_j, bg(i, j) = A(i, j) * bg_j.
RetrievedScores retrieve_scores(const AffinityMatrix& a, const MemoryBank& bank);

// Mean of the min(k, v.size()) largest values, summed in descending order.
// ContractError on empty input or k == 0.
double topk_average(std::span<const double> v, std::size_t k);

// Affinity, retrieval and top-K averaging in one pass. Query must be
// normalized; the affinity is returned for the memory update.
SimilarityResult similarity_maps(const FeatureMap& query, const MemoryBank& bank, std::size_t k);

// Two-way softmax over (S_f, S_b) per pixel.
Posterior posterior(const ScoreMaps& scores);

}  // namespace cme
