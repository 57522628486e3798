#include "cme/experiment.hpp"

#include <charconv>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cme/errors.hpp"

namespace cme {

const std::vector<Variant>& ablation_variants() {
  static const std::vector<Variant> kVariants = {
      {"baseline", Strategy::InitialOnly, DflMode::Off},
      {"+dfl_n", Strategy::InitialOnly, DflMode::NoPosterior},
      {"+dfl", Strategy::InitialOnly, DflMode::Full},
      {"+me_all", Strategy::AllFrames, DflMode::Off},
      {"+cme", Strategy::Compact, DflMode::Off},
      {"+cme+dfl", Strategy::Compact, DflMode::Full},
  };
  return kVariants;
}

const Variant& find_variant(std::string_view label) {
  for (const auto& v : ablation_variants()) {
    if (v.label == label) return v;
  }
  throw ContractError("unknown ablation variant '" + std::string(label) + "'");
}

std::vector<AblationRow> run_ablation(const SyntheticScenario& base,
                                      const std::vector<std::uint64_t>& seeds,
                                      const CmeConfig& cfg, const TrackerFlags& flags,
                                      const std::vector<Variant>& variants) {
  if (seeds.empty()) throw ContractError("run_ablation: seed list is empty");
  if (variants.empty()) throw ContractError("run_ablation: no variants requested");
  const std::size_t cells = seeds.size() * variants.size();
  std::vector<AblationRow> rows(cells);

  // One sequence per seed, generated up front so cells only read it.
  std::vector<Sequence> sequences(seeds.size());
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    SyntheticScenario sc = base;
    sc.seed = seeds[s];
    sequences[s] = generate_scenario(sc);
  }

#ifdef _OPENMP
  // Kernels inside a cell run serially while cells are spread over threads.
  const int saved_levels = omp_get_max_active_levels();
  omp_set_max_active_levels(1);
#endif
  const auto n = static_cast<long>(cells);
#pragma omp parallel for schedule(dynamic, 1)
  for (long cell = 0; cell < n; ++cell) {
    const std::size_t s = static_cast<std::size_t>(cell) / variants.size();
    const Variant& v = variants[static_cast<std::size_t>(cell) % variants.size()];
    CmeConfig vc = cfg;
    vc.strategy = v.strategy;
    TrackerFlags vf = flags;
    vf.dfl = v.dfl;
    const RunSummary sum = summarize(run_tracker(sequences[s], vc, vf));
    rows[static_cast<std::size_t>(cell)] = {seeds[s], v.label, sum.mean_iou, sum.final_bank_size};
  }
#ifdef _OPENMP
  omp_set_max_active_levels(saved_levels);
#endif
  // Cells were laid out seed-major in variant order, which is the output order.
  return rows;
}

std::vector<VariantMean> variant_means(const std::vector<AblationRow>& rows,
                                       const std::vector<Variant>& variants) {
  std::vector<VariantMean> out;
  for (const auto& v : variants) {
    double iou = 0.0;
    double bank = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows) {
      if (r.variant != v.label) continue;
      iou += r.mean_iou;
      bank += static_cast<double>(r.final_bank_size);
      ++count;
    }
    if (count == 0) continue;
    out.push_back({v.label, iou / static_cast<double>(count), bank / static_cast<double>(count)});
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string frames_csv(const std::vector<FrameResult>& results) {
  std::string out = "frame,iou,bank_size,merged,expanded,discarded\n";
  for (const auto& r : results) {
    out += std::to_string(r.frame) + ',' + format_real(r.iou) + ',' +
           std::to_string(r.report.bank_size_after) + ',' + std::to_string(r.report.merged_count) +
           ',' + std::to_string(r.report.expanded_count) + ',' +
           std::to_string(r.report.discarded_count) + '\n';
  }
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "seed,variant,mean_iou,final_bank_size\n";
  for (const auto& r : rows) {
    out += std::to_string(r.seed) + ',' + r.variant + ',' + format_real(r.mean_iou) + ',' +
           std::to_string(r.final_bank_size) + '\n';
  }
  return out;
}

std::string ablation_summary_csv(const std::vector<VariantMean>& means) {
  std::string out = "variant,mean_iou,mean_final_bank_size\n";
  for (const auto& m : means) {
    out += m.variant + ',' + format_real(m.mean_iou) + ',' + format_real(m.mean_final_bank_size) +
           '\n';
  }
  return out;
}

}  // namespace cme
