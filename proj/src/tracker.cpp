#include "cme/tracker.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "cme/errors.hpp"
#include "cme/matching.hpp"

namespace cme {
namespace {

bool inside(const Box& b, std::size_t height, std::size_t width) {
  return b.x >= 0 && b.y >= 0 && b.x + b.w <= static_cast<long>(width) &&
         b.y + b.h <= static_cast<long>(height);
}

// Window of the given size centered on `anchor`, shifted (not shrunk) to lie
// inside the frame. Used for the reference patch of the deformable block so it
// shares the query crop's grid.
Box fitted_window(const Box& anchor, long w, long h, std::size_t height, std::size_t width) {
  long x0 = anchor.x + anchor.w / 2 - w / 2;
  long y0 = anchor.y + anchor.h / 2 - h / 2;
  x0 = std::clamp(x0, 0L, static_cast<long>(width) - w);
  y0 = std::clamp(y0, 0L, static_cast<long>(height) - h);
  return {x0, y0, w, h};
}

struct DflState {
  DflParams params;
  std::vector<double> probe;
  DflOptions opts;
};

}  // namespace

std::string_view to_string(DflMode m) {
  switch (m) {
    case DflMode::Off: return "off";
    case DflMode::Full: return "full";
    case DflMode::NoPosterior: return "no-posterior";
  }
  return "unknown";
}

DflMode parse_dfl_mode(std::string_view name) {
  if (name == "off") return DflMode::Off;
  if (name == "full") return DflMode::Full;
  if (name == "no-posterior") return DflMode::NoPosterior;
  throw ContractError("unknown dfl mode '" + std::string(name) + "'");
}

Mask pseudo_mask_from_box(const Box& box, std::size_t height, std::size_t width) {
  if (box.empty()) throw ContractError("pseudo_mask_from_box: empty box");
  if (!inside(box, height, width)) throw ContractError("pseudo_mask_from_box: box outside frame");
  Mask m(height, width);
  for (long y = box.y; y < box.y + box.h; ++y) {
    for (long x = box.x; x < box.x + box.w; ++x) {
      m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1.0;
    }
  }
  return m;
}

Box query_region(const Box& prev, std::size_t height, std::size_t width) {
  if (prev.empty()) throw ContractError("query_region: previous box is empty");
  const long x0 = std::max(0L, prev.x - prev.w / 2);
  const long y0 = std::max(0L, prev.y - prev.h / 2);
  const long x1 = std::min(static_cast<long>(width), prev.x - prev.w / 2 + 2 * prev.w);
  const long y1 = std::min(static_cast<long>(height), prev.y - prev.h / 2 + 2 * prev.h);
  if (x1 <= x0 || y1 <= y0) throw ContractError("query_region: box lies outside the frame");
  return {x0, y0, x1 - x0, y1 - y0};
}

FeatureMap crop_features(const FeatureMap& frame, const Box& region) {
  if (region.empty() || !inside(region, frame.height, frame.width)) {
    throw ContractError("crop_features: region outside frame");
  }
  FeatureMap out(static_cast<std::size_t>(region.h), static_cast<std::size_t>(region.w),
                 frame.channels);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const auto src = frame.pixel((static_cast<std::size_t>(region.y) + y) * frame.width +
                                   static_cast<std::size_t>(region.x) + x);
      std::copy(src.begin(), src.end(), out.pixel(y * out.width + x).begin());
    }
  }
  return out;
}

Crop crop_query_region(const FeatureMap& frame, const Box& prev) {
  const Box region = query_region(prev, frame.height, frame.width);
  return {crop_features(frame, region), region};
}

Mask crop_mask(const Mask& mask, const Box& region) {
  if (region.empty() || !inside(region, mask.height, mask.width)) {
    throw ContractError("crop_mask: region outside mask");
  }
  Mask out(static_cast<std::size_t>(region.h), static_cast<std::size_t>(region.w));
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      out.at(y, x) = mask.at(static_cast<std::size_t>(region.y) + y,
                             static_cast<std::size_t>(region.x) + x);
    }
  }
  return out;
}

void paste_mask(Mask& dst, const Mask& patch, const Box& region) {
  if (patch.height != static_cast<std::size_t>(region.h) ||
      patch.width != static_cast<std::size_t>(region.w) ||
      !inside(region, dst.height, dst.width)) {
    throw DimensionError("paste_mask: patch does not fit region");
  }
  for (std::size_t y = 0; y < patch.height; ++y) {
    for (std::size_t x = 0; x < patch.width; ++x) {
      dst.at(static_cast<std::size_t>(region.y) + y, static_cast<std::size_t>(region.x) + x) =
          patch.at(y, x);
    }
  }
}

Mask binarize(const Posterior& p, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("binarize: threshold must be in (0,1)");
  Mask m(p.height, p.width);
  for (std::size_t i = 0; i < p.data.size(); ++i) m.data[i] = p.data[i] >= threshold ? 1.0 : 0.0;
  return m;
}

std::optional<Box> box_from_mask(const Mask& mask) {
  const std::size_t h = mask.height;
  const std::size_t w = mask.width;
  constexpr std::size_t kUnseen = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> label(h * w, kUnseen);
  std::vector<std::size_t> stack;
  std::optional<Box> best;
  std::size_t best_size = 0;

  for (std::size_t start = 0; start < h * w; ++start) {
    if (mask.data[start] < 0.5 || label[start] != kUnseen) continue;
    std::size_t size = 0;
    std::size_t min_x = w, min_y = h, max_x = 0, max_y = 0;
    label[start] = start;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t y = i / w;
      const std::size_t x = i % w;
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
      auto visit = [&](std::size_t j) {
        if (mask.data[j] >= 0.5 && label[j] == kUnseen) {
          label[j] = start;
          stack.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < w) visit(i + 1);
      if (y > 0) visit(i - w);
      if (y + 1 < h) visit(i + w);
    }
    if (size > best_size) {
      best_size = size;
      best = Box{static_cast<long>(min_x), static_cast<long>(min_y),
                 static_cast<long>(max_x - min_x + 1), static_cast<long>(max_y - min_y + 1)};
    }
  }
  return best;
}

double compute_iou(const Mask& pred, const Mask& truth) {
  if (pred.height != truth.height || pred.width != truth.width) {
    throw DimensionError("compute_iou: mask sizes differ");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] >= 0.5;
    const bool b = truth.data[i] >= 0.5;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<FrameResult> run_tracker(const Sequence& seq, const CmeConfig& cfg,
                                     const TrackerFlags& flags, const DflParams* dfl_params) {
  cfg.validate();
  if (seq.empty()) throw ContractError("run_tracker: empty sequence");
  const FeatureMap& first = seq.front().features;
  const std::size_t height = first.height;
  const std::size_t width = first.width;
  for (const auto& f : seq) {
    if (f.features.height != height || f.features.width != width ||
        f.features.channels != first.channels || f.truth.height != height ||
        f.truth.width != width) {
      throw DimensionError("run_tracker: frames must share one grid");
    }
  }

  const auto gt_box = box_from_mask(seq.front().truth);
  if (!gt_box) throw ContractError("run_tracker: first frame has an empty ground-truth mask");
  const Mask pseudo = pseudo_mask_from_box(*gt_box, height, width);

  std::vector<FrameResult> results;
  results.reserve(seq.size());

  // Initialization frame.
  const Box init_region = query_region(*gt_box, height, width);
  const FeatureMap init_query = normalize_features(crop_features(first, init_region));
  const Mask init_fg = crop_mask(pseudo, init_region);
  MemoryBank bank = init_memory(init_query, init_fg, complement(init_fg));
  {
    FrameResult r;
    r.frame = 0;
    r.crop = init_region;
    r.posterior = init_fg;
    r.binary = pseudo;
    r.box = *gt_box;
    r.box_found = true;
    r.iou = compute_iou(pseudo, seq.front().truth);
    r.report.expanded_count = bank.size();
    r.report.discarded_count = init_query.pixels() - bank.size();
    r.report.bank_size_after = bank.size();
    results.push_back(std::move(r));
  }

  std::optional<DflState> dfl;
  if (flags.dfl != DflMode::Off) {
    const std::size_t hidden = flags.dfl_hidden ? flags.dfl_hidden : first.channels;
    DflState s;
    s.params = dfl_params ? *dfl_params : dfl_init_params(flags.dfl_seed, first.channels, hidden);
    if (s.params.channels != first.channels) {
      throw DimensionError("run_tracker: DFL parameters expect a different channel count");
    }
    s.probe = make_probe(flags.dfl_seed, s.params.hidden);
    s.opts.apply_posterior = flags.dfl == DflMode::Full;
    if (flags.dfl_train_steps > 0) {
      train_dfl_toy(s.params, init_query, init_query, init_fg, init_fg, s.probe,
                    flags.dfl_train_steps, flags.dfl_learning_rate, s.opts);
    }
    dfl = std::move(s);
  }
  const FeatureMap init_normalized = dfl ? normalize_features(first) : FeatureMap{};

  Box prev = *gt_box;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    FrameResult r;
    r.frame = t;
    const Crop crop = crop_query_region(seq[t].features, prev);
    r.crop = crop.region;
    const FeatureMap query = normalize_features(crop.features);

    SimilarityResult sim = similarity_maps(query, bank, cfg.top_k);
    Posterior p = posterior(sim.scores);

    if (dfl) {
      const Box ref_region = fitted_window(*gt_box, crop.region.w, crop.region.h, height, width);
      const FeatureMap reference = crop_features(init_normalized, ref_region);
      const Mask p1 = crop_mask(pseudo, ref_region);
      const DflResult out = dfl_forward(query, reference, p1, dfl->params, dfl->opts);
      const Posterior pd = dfl_readout(out.output, dfl->probe);
      for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = 0.5 * (p.data[i] + pd.data[i]);
    }

    const Mask crop_binary = binarize(p, flags.binarize_threshold);
    r.binary = Mask(height, width);
    paste_mask(r.binary, crop_binary, crop.region);
    if (auto b = box_from_mask(r.binary)) {
      r.box = *b;
      r.box_found = true;
      prev = *b;
    } else {
      r.box = prev;
    }
    r.iou = compute_iou(r.binary, seq[t].truth);

    UpdateResult upd = update_memory(std::move(bank), query, crop_binary, complement(crop_binary),
                                     sim.affinity, cfg);
    bank = std::move(upd.bank);
    r.report = upd.report;
    r.posterior = std::move(p);
    results.push_back(std::move(r));
  }
  return results;
}

RunSummary summarize(const std::vector<FrameResult>& results) {
  RunSummary s;
  s.frames = results.size();
  if (results.empty()) return s;
  s.final_bank_size = results.back().report.bank_size_after;
  if (results.size() == 1) {
    s.mean_iou = s.min_iou = results.front().iou;
    return s;
  }
  double sum = 0.0;
  s.min_iou = 1.0;
  for (std::size_t t = 1; t < results.size(); ++t) {
    sum += results[t].iou;
    s.min_iou = std::min(s.min_iou, results[t].iou);
  }
  s.mean_iou = sum / static_cast<double>(results.size() - 1);
  return s;
}

}  // namespace cme
