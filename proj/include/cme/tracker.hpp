#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "cme/dfl.hpp"
#include "cme/memory.hpp"
#include "cme/scenario.hpp"
#include "cme/types.hpp"

namespace cme {

enum class DflMode { Off, Full, NoPosterior };

std::string_view to_string(DflMode m);
// "off", "full", "no-posterior"; ContractError otherwise.
DflMode parse_dfl_mode(std::string_view name);

struct TrackerFlags {
  DflMode dfl = DflMode::Off;
  std::size_t dfl_hidden = 0;  // 0 means "same as the feature channels"
  std::uint64_t dfl_seed = 1;
  // Gradient steps spent adapting the block to the initial frame.
  std::size_t dfl_train_steps = 60;
  double dfl_learning_rate = 0.5;
  double binarize_threshold = 0.5;
};

struct FrameResult {
  std::size_t frame = 0;
  Box crop;             // query region in frame coordinates
  Posterior posterior;  // over the crop
  Mask binary;          // full frame
  Box box;
  bool box_found = false;
  double iou = 0.0;
  UpdateReport report;
};

// 1 inside the box, 0 elsewhere. ContractError for an empty or
// out-of-bounds box.
Mask pseudo_mask_from_box(const Box& box, std::size_t height, std::size_t width);

struct Crop {
  FeatureMap features;
  Box region;  // region.x / region.y is the offset back into the frame
};

// Region centered on the box with twice its width and height (4x the area),
// intersected with the frame.
Box query_region(const Box& prev, std::size_t height, std::size_t width);
Crop crop_query_region(const FeatureMap& frame, const Box& prev);

FeatureMap crop_features(const FeatureMap& frame, const Box& region);
Mask crop_mask(const Mask& mask, const Box& region);
// Copies `patch` into `dst` at region.x / region.y.
void paste_mask(Mask& dst, const Mask& patch, const Box& region);

// 1 where p >= threshold, else 0.
Mask binarize(const Posterior& p, double threshold = 0.5);

// Bounding box of the largest 4-connected foreground component (values
// >= 0.5). Equal-size components resolve to the one met first in raster
// order. nullopt for an empty mask.
std::optional<Box> box_from_mask(const Mask& mask);

// |pred & truth| / |pred | truth| on masks thresholded at 0.5; 1 when both
// are empty. DimensionError on size mismatch.
double compute_iou(const Mask& pred, const Mask& truth);

// Frame 0 seeds the memory from the pseudo mask of the ground-truth box (its
// FrameResult reports the pseudo mask). Each later frame is cropped around
// the previous box, matched, optionally fused with the deformable-feature
// readout, binarized, boxed, scored and then written back to memory.
// `dfl_params` overrides the seeded initialization when DFL is on.
std::vector<FrameResult> run_tracker(const Sequence& seq, const CmeConfig& cfg,
                                     const TrackerFlags& flags,
                                     const DflParams* dfl_params = nullptr);

struct RunSummary {
  double mean_iou = 0.0;  // over tracked frames (1..T-1)
  double min_iou = 0.0;
  std::size_t final_bank_size = 0;
  std::size_t frames = 0;
};

RunSummary summarize(const std::vector<FrameResult>& results);

}  // namespace cme
