#pragma once

#include <cstdint>

#include "cme/matching.hpp"
#include "cme/rng.hpp"
#include "cme/scenario.hpp"
#include "cme/types.hpp"

namespace cme::testing {

inline FeatureMap random_map(std::uint64_t seed, std::size_t h, std::size_t w, std::size_t c) {
  Rng rng(seed);
  FeatureMap fm(h, w, c);
  for (double& v : fm.data) v = rng.normal();
  return fm;
}

// Binary fg values with the given foreground rate.
inline MemoryBank random_bank(std::uint64_t seed, std::size_t entries, std::size_t c,
                              double fg_rate = 0.4) {
  const FeatureMap keys = normalize_features(random_map(seed, entries, 1, c));
  Rng rng(seed ^ 0xabcdefULL);
  MemoryBank bank(c);
  for (std::size_t j = 0; j < entries; ++j) {
    const double fg = rng.uniform() < fg_rate ? 1.0 : 0.0;
    bank.append(keys.pixel(j), fg, 1.0 - fg);
  }
  return bank;
}

// Same, with soft values in [0,1].
inline MemoryBank random_soft_bank(std::uint64_t seed, std::size_t entries, std::size_t c) {
  const FeatureMap keys = normalize_features(random_map(seed, entries, 1, c));
  Rng rng(seed ^ 0x5eedULL);
  MemoryBank bank(c);
  for (std::size_t j = 0; j < entries; ++j) {
    const double fg = rng.uniform();
    bank.append(keys.pixel(j), fg, 1.0 - fg);
  }
  return bank;
}

inline Mask random_binary_mask(std::uint64_t seed, std::size_t h, std::size_t w, double rate = 0.4) {
  Rng rng(seed);
  Mask m(h, w);
  for (double& v : m.data) v = rng.uniform() < rate ? 1.0 : 0.0;
  return m;
}

// Drift sequence used by the CME trace fixture and the protocol invariants.
inline SyntheticScenario drift_scenario(std::uint64_t seed, std::size_t frames = 10) {
  SyntheticScenario s;
  s.height = 12;
  s.width = 12;
  s.channels = 8;
  s.frame_count = frames;
  s.seed = seed;
  s.appearance_drift_rate = 0.12;
  s.noise_sigma = 0.05;
  s.target = {5.5, 5.5, 0.4, -0.3, 2.5, 0.2, 8.0};
  // Hidden under the target at frame 0, then walks out with an unseen
  // appearance so the update has something to discard.
  s.distractor = Distractor{{5.5, 5.5, -0.9, 0.7, 1.5, 0.0, 8.0}, 0.0};
  return s;
}

}  // namespace cme::testing
