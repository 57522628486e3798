#include "cme/types.hpp"

#include <cmath>
#include <string>

#include "cme/errors.hpp"

namespace cme {

void FeatureMap::validate() const {
  if (height == 0 || width == 0 || channels == 0) {
    throw ContractError("FeatureMap: dimensions must be positive");
  }
  if (data.size() != height * width * channels) {
    throw ContractError("FeatureMap: data length " + std::to_string(data.size()) +
                        " != h*w*c = " + std::to_string(height * width * channels));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw ContractError("FeatureMap: non-finite value at offset " + std::to_string(i));
    }
  }
}

void Mask::validate() const {
  if (data.size() != height * width) {
    throw ContractError("Mask: data length does not match h*w");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!(data[i] >= 0.0 && data[i] <= 1.0)) {
      throw ContractError("Mask: value outside [0,1] at pixel " + std::to_string(i));
    }
  }
}

Mask complement(const Mask& m) {
  Mask out(m.height, m.width);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = 1.0 - m.data[i];
  return out;
}

void check_mask_pair(const Mask& fg, const Mask& bg, double tol) {
  if (fg.height != bg.height || fg.width != bg.width) {
    throw DimensionError("mask pair: fg and bg grids differ");
  }
  for (std::size_t i = 0; i < fg.data.size(); ++i) {
    if (std::abs(fg.data[i] + bg.data[i] - 1.0) > tol) {
      throw ContractError("mask pair: fg + bg != 1 at pixel " + std::to_string(i));
    }
  }
}

MemoryEntry MemoryBank::entry(std::size_t j) const {
  auto k = key(j);
  return MemoryEntry{{k.begin(), k.end()}, fg_[j], bg_[j]};
}

void MemoryBank::append(std::span<const double> key, double fg, double bg) {
  if (key.size() != channels_) {
    throw DimensionError("MemoryBank::append: key has " + std::to_string(key.size()) +
                         " channels, bank has " + std::to_string(channels_));
  }
  keys_.insert(keys_.end(), key.begin(), key.end());
  fg_.push_back(fg);
  bg_.push_back(bg);
}

void MemoryBank::evict_oldest_non_initial(std::size_t count) {
  const std::size_t available = size() - initial_count_;
  if (count > available) count = available;
  if (count == 0) return;
  const auto first = static_cast<std::ptrdiff_t>(initial_count_);
  const auto last = static_cast<std::ptrdiff_t>(initial_count_ + count);
  keys_.erase(keys_.begin() + first * static_cast<std::ptrdiff_t>(channels_),
              keys_.begin() + last * static_cast<std::ptrdiff_t>(channels_));
  fg_.erase(fg_.begin() + first, fg_.begin() + last);
  bg_.erase(bg_.begin() + first, bg_.begin() + last);
}

void MemoryBank::validate(double tol) const {
  for (std::size_t j = 0; j < size(); ++j) {
    double sq = 0.0;
    for (double v : key(j)) sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > tol) {
      throw ContractError("MemoryBank: key " + std::to_string(j) + " is not unit-norm");
    }
    if (std::abs(fg_[j] + bg_[j] - 1.0) > tol) {
      throw ContractError("MemoryBank: entry " + std::to_string(j) + " has fg + bg != 1");
    }
  }
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::InitialOnly: return "initial-only";
    case Strategy::AllFrames: return "all-frames";
    case Strategy::Compact: return "compact";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "initial-only") return Strategy::InitialOnly;
  if (name == "all-frames") return Strategy::AllFrames;
  if (name == "compact") return Strategy::Compact;
  throw ContractError("unknown strategy '" + std::string(name) + "'");
}

void CmeConfig::validate() const {
  if (top_k < 1) throw ContractError("CmeConfig: top_k must be >= 1");
  if (!(zeta > 0.0 && zeta <= 1.0)) throw ContractError("CmeConfig: zeta must lie in (0,1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("CmeConfig: beta must lie in [0,1]");
  if (all_frames_cap && *all_frames_cap == 0) {
    throw ContractError("CmeConfig: all_frames_cap must be positive when set");
  }
}

}  // namespace cme
