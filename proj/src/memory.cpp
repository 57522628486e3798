#include "cme/memory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cme/errors.hpp"

namespace cme {
namespace {

bool is_zero_vector(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

void check_update_inputs(const MemoryBank& bank, const FeatureMap& query, const Mask& fg,
                         const Mask& bg) {
  if (query.channels != bank.channels()) {
    throw DimensionError("memory update: query/bank channel mismatch");
  }
  if (fg.height != query.height || fg.width != query.width) {
    throw DimensionError("memory update: mask grid differs from query grid");
  }
  check_mask_pair(fg, bg);
}

}  // namespace

MemoryBank init_memory(const FeatureMap& features, const Mask& fg, const Mask& bg) {
  if (fg.height != features.height || fg.width != features.width) {
    throw DimensionError("init_memory: mask grid differs from feature grid");
  }
  check_mask_pair(fg, bg);
  MemoryBank bank(features.channels);
  for (std::size_t i = 0; i < features.pixels(); ++i) {
    const auto key = features.pixel(i);
    if (is_zero_vector(key)) continue;
    bank.append(key, fg.data[i], bg.data[i]);
  }
  if (bank.empty()) throw EmptyBankError("init_memory: every pixel has a zero-norm feature");
  bank.seal_initial();
  return bank;
}

MaxCorrelation max_correlations(const AffinityMatrix& a) {
  if (a.rows == 0 || a.cols == 0) throw ContractError("max_correlations: empty affinity");
  MaxCorrelation mc{std::vector<double>(a.rows), std::vector<std::size_t>(a.rows)};
  const auto rows = static_cast<long>(a.rows);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const auto row = a.row(static_cast<std::size_t>(i));
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) best = j;
    }
    mc.value[static_cast<std::size_t>(i)] = row[best];
    mc.index[static_cast<std::size_t>(i)] = best;
  }
  return mc;
}

double expansion_threshold(const std::vector<double>& max_values) {
  double sum = 0.0;
  for (double v : max_values) sum += v;
  const double mean = sum / static_cast<double>(max_values.size());
  return mean / (2.0 * std::numbers::e);
}

UpdateResult cme_update(MemoryBank bank, const FeatureMap& query, const Mask& fg, const Mask& bg,
                        const AffinityMatrix& a, const CmeConfig& cfg) {
  cfg.validate();
  check_update_inputs(bank, query, fg, bg);
  if (a.rows != query.pixels() || a.cols != bank.size()) {
    throw ContractError("cme_update: affinity is " + std::to_string(a.rows) + "x" +
                        std::to_string(a.cols) + ", expected " +
                        std::to_string(query.pixels()) + "x" + std::to_string(bank.size()));
  }

  UpdateReport rep;
  rep.bank_size_before = bank.size();
  const MaxCorrelation mc = max_correlations(a);
  rep.avg_threshold = expansion_threshold(mc.value);

  const std::size_t c = bank.channels();
  const double beta = cfg.beta;
  std::vector<std::size_t> to_expand;

  for (std::size_t i = 0; i < query.pixels(); ++i) {
    const double re = mc.value[i];
    const auto q = query.pixel(i);
    if (re >= cfg.zeta) {
      const std::size_t j = mc.index[i];
      auto key = bank.key(j);
      double sq = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        key[ch] = beta * q[ch] + (1.0 - beta) * key[ch];
        sq += key[ch] * key[ch];
      }
      const double norm = std::sqrt(sq);
      for (double& v : key) v /= norm;
      const double f = std::clamp(beta * fg.data[i] + (1.0 - beta) * bank.fg(j), 0.0, 1.0);
      const double b = std::clamp(beta * bg.data[i] + (1.0 - beta) * bank.bg(j), 0.0, 1.0);
      bank.set_values(j, f, b);
      ++rep.merged_count;
    } else if (re >= rep.avg_threshold && !is_zero_vector(q)) {
      to_expand.push_back(i);
    } else {
      ++rep.discarded_count;
    }
  }

  for (std::size_t i : to_expand) bank.append(query.pixel(i), fg.data[i], bg.data[i]);
  rep.expanded_count = to_expand.size();
  rep.bank_size_after = bank.size();
  return {std::move(bank), rep};
}

UpdateResult baseline_update(MemoryBank bank, const FeatureMap& query, const Mask& fg,
                             const Mask& bg, const CmeConfig& cfg) {
  cfg.validate();
  check_update_inputs(bank, query, fg, bg);
  UpdateReport rep;
  rep.bank_size_before = bank.size();

  switch (cfg.strategy) {
    case Strategy::InitialOnly:
      rep.discarded_count = query.pixels();
      break;
    case Strategy::AllFrames: {
      for (std::size_t i = 0; i < query.pixels(); ++i) {
        const auto q = query.pixel(i);
        if (is_zero_vector(q)) {
          ++rep.discarded_count;
          continue;
        }
        bank.append(q, fg.data[i], bg.data[i]);
        ++rep.expanded_count;
      }
      if (cfg.all_frames_cap) {
        const std::size_t history = bank.size() - bank.initial_count();
        if (history > *cfg.all_frames_cap) {
          rep.evicted_count = history - *cfg.all_frames_cap;
          bank.evict_oldest_non_initial(rep.evicted_count);
        }
      }
      break;
    }
    case Strategy::Compact:
      throw ContractError("baseline_update: compact strategy requires cme_update");
  }
  rep.bank_size_after = bank.size();
  return {std::move(bank), rep};
}

UpdateResult update_memory(MemoryBank bank, const FeatureMap& query, const Mask& fg,
                           const Mask& bg, const AffinityMatrix& a, const CmeConfig& cfg) {
  if (cfg.strategy == Strategy::Compact) {
    return cme_update(std::move(bank), query, fg, bg, a, cfg);
  }
  return baseline_update(std::move(bank), query, fg, bg, cfg);
}

}  // namespace cme
