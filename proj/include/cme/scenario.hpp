#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "cme/types.hpp"

namespace cme {

// Linear motion that bounces off the frame border. The support is an
// axis-aligned rectangle whose half-extents breathe in antiphase:
//   half_w = radius * (1 + deformation * sin(2 pi t / period))
//   half_h = radius * (1 - deformation * sin(2 pi t / period))
struct ObjectTrack {
  double center_x = 0.0;
  double center_y = 0.0;
  double velocity_x = 0.0;
  double velocity_y = 0.0;
  double radius = 0.0;
  double deformation = 0.0;
  double deformation_period = 10.0;
};

struct ObjectState {
  double center_x = 0.0;
  double center_y = 0.0;
  double half_w = 0.0;
  double half_h = 0.0;

  bool contains(std::size_t x, std::size_t y) const;
};

struct Distractor {
  ObjectTrack track;
  double similarity = 0.0;  // cosine to the target's current appearance
};

struct SyntheticScenario {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t frame_count = 0;
  ObjectTrack target;
  double appearance_drift_rate = 0.0;  // radians per frame
  std::optional<Distractor> distractor;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  // ContractError on a degenerate spec (radius <= 0, object cannot fit,
  // similarity outside [0,1], negative noise, fewer than 4 channels).
  void validate() const;
};

struct SequenceFrame {
  FeatureMap features;
  Mask truth;  // binary target support
};

using Sequence = std::vector<SequenceFrame>;

ObjectState object_state(const ObjectTrack& track, std::size_t frame, std::size_t height,
                         std::size_t width);

// Target pixels carry cos(rt) u + sin(rt) w for drift rate r, the distractor
// carries rho * target + sqrt(1 - rho^2) n, the background carries a fixed
// direction b, with u, w, n, b orthonormal and seeded. Every channel then
// gets N(0, noise_sigma^2) noise. The target is drawn over the distractor.
Sequence generate_scenario(const SyntheticScenario& spec);

// Scenario TOML. Top level: h, w, c, frame_count, seed (required),
// appearance_drift_rate, noise_sigma. [target]: center = [x, y], radius
// (required), velocity = [vx, vy], deformation, deformation_period.
// [distractor] (optional): same keys plus similarity (required).
// FormatError names the missing or malformed key.
SyntheticScenario parse_scenario(std::string_view toml_text);

}  // namespace cme
