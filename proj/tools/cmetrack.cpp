// cmetrack: generate synthetic sequences, track them with the compact memory
// matcher, run strategy ablations and verify the deformable block's gradients.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or input error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cme/dfl.hpp"
#include "cme/errors.hpp"
#include "cme/experiment.hpp"
#include "cme/io.hpp"
#include "cme/parallel.hpp"
#include "cme/scenario.hpp"
#include "cme/tracker.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;

struct RunOptions {
  std::string scenario;
  std::string strategy = "compact";
  std::size_t topk = cme::CmeConfig::kDefaultTopK;
  double zeta = cme::CmeConfig::kDefaultZeta;
  double beta = cme::CmeConfig::kDefaultBeta;
  std::optional<std::size_t> all_frames_cap;
  std::string dfl = "off";
  std::size_t dfl_steps = cme::TrackerFlags{}.dfl_train_steps;
  std::string dfl_params;
  std::string seeds;
  std::string variants;
  std::string out = "out";
  bool save_masks = false;
};

struct GenOptions {
  std::string scenario;
  std::string out = "sequence";
};

struct GradOptions {
  std::uint64_t seed = 1;
  std::size_t height = 2;
  std::size_t width = 2;
  std::size_t channels = 3;
  std::size_t hidden = 3;
  std::string dfl = "full";
  bool zero_mask = false;
  bool inject_fault = false;
};

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw cme::ContractError("--seeds: '" + item + "' is not an integer");
    seeds.push_back(v);
  }
  return seeds;
}

std::string frame_name(const char* prefix, std::size_t t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.%s", prefix, t, ext);
  return buf;
}

cme::SyntheticScenario load_scenario_spec(const fs::path& path) {
  return cme::parse_scenario(cme::read_text_file(path));
}

// A scenario is either a TOML spec (generated in memory) or a directory
// written by `gen`.
cme::Sequence load_sequence(const fs::path& path, std::optional<std::uint64_t> seed) {
  if (!fs::exists(path)) throw cme::IoError("scenario '" + path.string() + "' does not exist");
  if (!fs::is_directory(path)) {
    cme::SyntheticScenario spec = load_scenario_spec(path);
    if (seed) spec.seed = *seed;
    return cme::generate_scenario(spec);
  }
  cme::Sequence seq;
  for (std::size_t t = 0;; ++t) {
    const fs::path features = path / frame_name("frame", t, "txt");
    const fs::path truth = path / frame_name("truth", t, "pgm");
    if (!fs::exists(features)) break;
    seq.push_back({cme::load_feature_map(features), cme::load_mask_pgm(truth)});
  }
  if (seq.empty()) throw cme::IoError("no frame_000.txt in '" + path.string() + "'");
  return seq;
}

cme::CmeConfig resolve_config(const RunOptions& o) {
  cme::CmeConfig cfg;
  cfg.top_k = o.topk;
  cfg.zeta = o.zeta;
  cfg.beta = o.beta;
  cfg.strategy = cme::parse_strategy(o.strategy);
  cfg.all_frames_cap = o.all_frames_cap;
  cfg.validate();
  return cfg;
}

json config_json(const RunOptions& o, const cme::CmeConfig& cfg) {
  json j;
  j["scenario"] = o.scenario;
  j["strategy"] = std::string(cme::to_string(cfg.strategy));
  j["topk"] = cfg.top_k;
  j["zeta"] = cfg.zeta;
  j["beta"] = cfg.beta;
  j["all_frames_cap"] = cfg.all_frames_cap ? json(*cfg.all_frames_cap) : json(nullptr);
  j["dfl"] = o.dfl;
  j["dfl_train_steps"] = o.dfl_steps;
  j["seeds"] = o.seeds;
  return j;
}

json report_json(const cme::FrameResult& r) {
  return {{"frame", r.frame},
          {"merged", r.report.merged_count},
          {"expanded", r.report.expanded_count},
          {"discarded", r.report.discarded_count},
          {"evicted", r.report.evicted_count},
          {"bank_size_before", r.report.bank_size_before},
          {"bank_size_after", r.report.bank_size_after},
          {"avg_threshold", r.report.avg_threshold},
          {"iou", r.iou}};
}

int cmd_gen(const GenOptions& o) {
  const cme::SyntheticScenario spec = load_scenario_spec(o.scenario);
  const cme::Sequence seq = cme::generate_scenario(spec);
  fs::create_directories(o.out);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    cme::save_feature_map(seq[t].features, fs::path(o.out) / frame_name("frame", t, "txt"));
    cme::save_mask_pgm(seq[t].truth, fs::path(o.out) / frame_name("truth", t, "pgm"));
  }
  std::cout << "wrote " << seq.size() << " frames to " << o.out << "\n";
  return kOk;
}

int cmd_run(const RunOptions& o) {
  const cme::CmeConfig cfg = resolve_config(o);
  cme::TrackerFlags flags;
  flags.dfl = cme::parse_dfl_mode(o.dfl);
  flags.dfl_train_steps = o.dfl_steps;
  std::optional<std::uint64_t> seed;
  if (!o.seeds.empty()) {
    const auto seeds = parse_seed_list(o.seeds);
    if (!seeds.empty()) seed = seeds.front();
  }
  const cme::Sequence seq = load_sequence(o.scenario, seed);
  std::optional<cme::DflParams> params;
  if (!o.dfl_params.empty()) params = cme::load_dfl_params(o.dfl_params);

  const auto results = cme::run_tracker(seq, cfg, flags, params ? &*params : nullptr);
  const cme::RunSummary sum = cme::summarize(results);

  fs::create_directories(o.out);
  json metrics;
  metrics["version"] = std::string(cme::kVersion);
  metrics["config"] = config_json(o, cfg);
  metrics["summary"][std::string(cme::to_string(cfg.strategy))] = {
      {"mean_iou", sum.mean_iou},
      {"min_iou", sum.min_iou},
      {"final_bank_size", sum.final_bank_size},
      {"frames", sum.frames}};
  json updates = json::array();
  for (const auto& r : results) updates.push_back(report_json(r));
  metrics["updates"] = std::move(updates);
  cme::write_file_atomic(fs::path(o.out) / "metrics.json", metrics.dump(2) + "\n");
  cme::write_file_atomic(fs::path(o.out) / "frames.csv", cme::frames_csv(results));

  if (o.save_masks) {
    fs::create_directories(fs::path(o.out) / "masks");
    for (const auto& r : results) {
      cme::save_mask_pgm(r.binary, fs::path(o.out) / "masks" / frame_name("mask", r.frame, "pgm"));
    }
  }
  std::cout << "strategy " << cme::to_string(cfg.strategy) << ": mean IoU "
            << cme::format_real(sum.mean_iou) << ", final bank " << sum.final_bank_size << "\n";
  return kOk;
}

int cmd_ablate(const RunOptions& o) {
  cme::CmeConfig cfg = resolve_config(o);
  cme::TrackerFlags flags;
  flags.dfl_train_steps = o.dfl_steps;
  const auto seeds = parse_seed_list(o.seeds);
  if (seeds.empty()) throw cme::ContractError("ablate: --seeds must list at least one seed");

  std::vector<cme::Variant> variants;
  if (o.variants.empty()) {
    variants = cme::ablation_variants();
  } else {
    std::stringstream ss(o.variants);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) variants.push_back(cme::find_variant(item));
    }
  }
  if (variants.size() < 2) throw cme::ContractError("ablate: request at least two variants");

  if (!fs::exists(o.scenario) || fs::is_directory(o.scenario)) {
    throw cme::IoError("ablate: --scenario must be a scenario TOML file");
  }
  const cme::SyntheticScenario base = load_scenario_spec(o.scenario);
  const auto rows = cme::run_ablation(base, seeds, cfg, flags, variants);
  const auto means = cme::variant_means(rows, variants);

  fs::create_directories(o.out);
  cme::write_file_atomic(fs::path(o.out) / "ablation.csv", cme::ablation_csv(rows));
  cme::write_file_atomic(fs::path(o.out) / "ablation_summary.csv", cme::ablation_summary_csv(means));
  json metrics;
  metrics["version"] = std::string(cme::kVersion);
  metrics["config"] = config_json(o, cfg);
  for (const auto& m : means) {
    metrics["summary"][m.variant] = {{"mean_iou", m.mean_iou},
                                     {"mean_final_bank_size", m.mean_final_bank_size}};
  }
  cme::write_file_atomic(fs::path(o.out) / "metrics.json", metrics.dump(2) + "\n");

  std::cout << cme::ablation_summary_csv(means);
  return kOk;
}

int cmd_gradcheck(const GradOptions& o) {
  if (o.height * o.width > 16) throw cme::ContractError("gradcheck: h*w must be <= 16");
  const auto inst = cme::random_gradcheck_instance(o.seed, o.height, o.width, o.channels,
                                                   o.hidden, o.zero_mask);
  cme::DflOptions opts;
  opts.apply_posterior = cme::parse_dfl_mode(o.dfl) != cme::DflMode::NoPosterior;
  const auto fwd = cme::dfl_forward(inst.query, inst.reference, inst.p1_fg, inst.params, opts);
  auto grads = cme::dfl_backward(inst.output_grad, fwd.cache, inst.query, inst.reference,
                                 inst.p1_fg, inst.params);
  if (o.inject_fault) grads.query_proj.data[0] += 0.1 + 0.5 * grads.query_proj.data[0];

  const auto rep = cme::check_gradients(inst.query, inst.reference, inst.p1_fg, inst.params,
                                        inst.output_grad, grads, opts);
  constexpr double kTolerance = 1e-4;
  std::cout << "max relative error " << rep.max_rel_error << "\n";
  if (rep.max_rel_error < kTolerance) return kOk;
  for (const auto& e : rep.worst_per_matrix) {
    std::cerr << e.matrix << "[" << e.row << "," << e.col << "]: analytic " << e.analytic
              << " numeric " << e.numeric << " rel " << e.rel_error << "\n";
  }
  return kVerifyFailed;
}

void add_run_flags(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--scenario", o.scenario, "Scenario TOML file or directory written by gen")
      ->required();
  cmd->add_option("--strategy", o.strategy, "initial-only | all-frames | compact")
      ->check(CLI::IsMember({"initial-only", "all-frames", "compact"}));
  cmd->add_option("--topk", o.topk, "Top-K averaging depth")->check(CLI::PositiveNumber);
  cmd->add_option("--zeta", o.zeta, "Merge threshold on max correlation");
  cmd->add_option("--beta", o.beta, "Fusion weight of merged features");
  cmd->add_option("--all-frames-cap", o.all_frames_cap, "History cap for the all-frames baseline");
  cmd->add_option("--dfl-steps", o.dfl_steps, "Adaptation steps for the deformable block");
  cmd->add_option("--seeds", o.seeds, "Comma-separated scenario seeds");
  cmd->add_option("--out", o.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compact memory matching and deformable feature harness"};
  app.set_config("--config", "", "TOML/INI file with flag defaults; flags override it");
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write a synthetic sequence to disk");
  gen_cmd->add_option("--scenario", gen.scenario, "Scenario TOML file")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory");

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Track one sequence");
  add_run_flags(run_cmd, run);
  run_cmd->add_option("--dfl", run.dfl, "off | full | no-posterior")
      ->check(CLI::IsMember({"off", "full", "no-posterior"}));
  run_cmd->add_option("--dfl-params", run.dfl_params, "dfl-params v1 file to use");
  run_cmd->add_flag("--save-masks", run.save_masks, "Write per-frame PGM masks under masks/");

  RunOptions abl;
  auto* abl_cmd = app.add_subcommand("ablate", "Run the strategy/DFL ablation over seeds");
  add_run_flags(abl_cmd, abl);
  abl_cmd->add_option("--variants", abl.variants,
                      "Comma-separated subset of baseline,+dfl_n,+dfl,+me_all,+cme,+cme+dfl");

  GradOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Check DFL gradients by finite differences");
  grad_cmd->add_option("--seed", grad.seed, "Instance seed");
  grad_cmd->add_option("--height", grad.height)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--width", grad.width)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--channels", grad.channels)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--hidden", grad.hidden)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--dfl", grad.dfl, "full | no-posterior")
      ->check(CLI::IsMember({"full", "no-posterior"}));
  grad_cmd->add_flag("--zero-mask", grad.zero_mask, "Use an all-zero initial mask");
  grad_cmd->add_flag("--inject-fault", grad.inject_fault,
                     "Corrupt one analytic gradient entry (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    cme::apply_thread_limit_from_env();
    if (*gen_cmd) return cmd_gen(gen);
    if (*run_cmd) return cmd_run(run);
    if (*abl_cmd) return cmd_ablate(abl);
    if (*grad_cmd) return cmd_gradcheck(grad);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
