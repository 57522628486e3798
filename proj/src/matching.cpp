#include "cme/matching.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "cme/errors.hpp"

namespace cme {
namespace {

void check_bank(const FeatureMap& query, const MemoryBank& bank) {
  if (bank.empty()) throw ContractError("matching: memory bank is empty");
  if (query.channels != bank.channels()) {
    throw DimensionError("matching: query has " + std::to_string(query.channels) +
                         " channels, bank keys have " + std::to_string(bank.channels()));
  }
}

// Keeps the k largest values seen so far, sorted descending. k is small
// (3 by default), so insertion beats a heap.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { best_.reserve(k); }

  void push(double v) {
    if (best_.size() == k_) {
      if (!(v > best_.back())) return;
      best_.pop_back();
    }
    auto pos = std::upper_bound(best_.begin(), best_.end(), v, std::greater<>{});
    best_.insert(pos, v);
  }

  double mean() const {
    double sum = 0.0;
    for (double v : best_) sum += v;
    return sum / static_cast<double>(best_.size());
  }

 private:
  std::size_t k_;
  std::vector<double> best_;
};

}  // namespace

FeatureMap normalize_features(const FeatureMap& fm, std::size_t* degenerate) {
  FeatureMap out = fm;
  const auto n = static_cast<long>(fm.pixels());
  long zeros = 0;
#pragma omp parallel for schedule(static) reduction(+ : zeros)
  for (long i = 0; i < n; ++i) {
    auto px = out.pixel(static_cast<std::size_t>(i));
    double sq = 0.0;
    for (double v : px) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm < kDegenerateNorm) {
      std::fill(px.begin(), px.end(), 0.0);
      ++zeros;
    } else {
      for (double& v : px) v /= norm;
    }
  }
  if (degenerate) *degenerate = static_cast<std::size_t>(zeros);
  return out;
}

AffinityMatrix compute_affinity(const FeatureMap& query, const MemoryBank& bank) {
  check_bank(query, bank);
  const std::size_t n = bank.size();
  const std::size_t c = query.channels;
  AffinityMatrix a(query.pixels(), n);
  const double* keys = bank.keys().data();
  const auto rows = static_cast<long>(a.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const double* q = query.data.data() + static_cast<std::size_t>(i) * c;
    double* out = a.data.data() + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* k = keys + j * c;
      double dot = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) dot += q[ch] * k[ch];
      out[j] = dot;
    }
  }
  return a;
}

RetrievedScores retrieve_scores(const AffinityMatrix& a, const MemoryBank& bank) {
  if (a.cols != bank.size()) {
    throw DimensionError("retrieve_scores: affinity has " + std::to_string(a.cols) +
                         " columns, bank has " + std::to_string(bank.size()) + " entries");
  }
  RetrievedScores s{a.rows, a.cols, std::vector<double>(a.data.size()),
                    std::vector<double>(a.data.size())};
  const auto fg = bank.fg_values();
  const auto bg = bank.bg_values();
  const auto rows = static_cast<long>(a.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * a.cols;
    for (std::size_t j = 0; j < a.cols; ++j) {
      s.fg[base + j] = a.data[base + j] * fg[j];
      s.bg[base + j] = a.data[base + j] * bg[j];
    }
  }
  return s;
}

double topk_average(std::span<const double> v, std::size_t k) {
  if (v.empty()) throw ContractError("topk_average: empty vector");
  if (k == 0) throw ContractError("topk_average: K must be >= 1");
  TopK top(std::min(k, v.size()));
  for (double x : v) top.push(x);
  return top.mean();
}

SimilarityResult similarity_maps(const FeatureMap& query, const MemoryBank& bank, std::size_t k) {
  if (k == 0) throw ContractError("similarity_maps: K must be >= 1");
  SimilarityResult r;
  r.affinity = compute_affinity(query, bank);
  const std::size_t n = bank.size();
  const std::size_t kk = std::min(k, n);
  const auto fg = bank.fg_values();
  const auto bg = bank.bg_values();

  r.scores.height = query.height;
  r.scores.width = query.width;
  r.scores.fg.assign(query.pixels(), 0.0);
  r.scores.bg.assign(query.pixels(), 0.0);
  const auto rows = static_cast<long>(query.pixels());
  // Retrieval fused into the top-K scan; same products as retrieve_scores.
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const auto row = r.affinity.row(static_cast<std::size_t>(i));
    TopK top_fg(kk);
    TopK top_bg(kk);
    for (std::size_t j = 0; j < n; ++j) {
      top_fg.push(row[j] * fg[j]);
      top_bg.push(row[j] * bg[j]);
    }
    r.scores.fg[static_cast<std::size_t>(i)] = top_fg.mean();
    r.scores.bg[static_cast<std::size_t>(i)] = top_bg.mean();
  }
  return r;
}

Posterior posterior(const ScoreMaps& scores) {
  Posterior p(scores.height, scores.width);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const double sf = scores.fg[i];
    const double sb = scores.bg[i];
    const double m = std::max(sf, sb);
    const double ef = std::exp(sf - m);
    const double eb = std::exp(sb - m);
    p.data[i] = ef / (ef + eb);
  }
  return p;
}

}  // namespace cme
