#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cme/scenario.hpp"
#include "cme/tracker.hpp"

namespace cme {

inline constexpr std::string_view kVersion = "0.1.0";

struct Variant {
  std::string label;
  Strategy strategy;
  DflMode dfl;
};

// baseline, +dfl_n, +dfl, +me_all, +cme, +cme+dfl, in that order.
const std::vector<Variant>& ablation_variants();
const Variant& find_variant(std::string_view label);

struct AblationRow {
  std::uint64_t seed = 0;
  std::string variant;
  double mean_iou = 0.0;
  std::size_t final_bank_size = 0;
};

struct VariantMean {
  std::string variant;
  double mean_iou = 0.0;
  double mean_final_bank_size = 0.0;
};

// Runs every (seed, variant) cell on `base` with its seed replaced. Cells run
// concurrently with isolated state; rows come back sorted by seed, then by
// variant order.
std::vector<AblationRow> run_ablation(const SyntheticScenario& base,
                                      const std::vector<std::uint64_t>& seeds,
                                      const CmeConfig& cfg, const TrackerFlags& flags,
                                      const std::vector<Variant>& variants);

// Means in variant order, reduced over seeds in seed order.
std::vector<VariantMean> variant_means(const std::vector<AblationRow>& rows,
                                       const std::vector<Variant>& variants);

// Shortest round-trip decimal form; identical bits give identical text.
std::string format_real(double v);

std::string frames_csv(const std::vector<FrameResult>& results);
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_summary_csv(const std::vector<VariantMean>& means);

}  // namespace cme
