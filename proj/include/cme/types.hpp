#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cme {

// h x w grid of c-dimensional vectors. Pixel i = y * w + x; channel k of
// pixel i lives at data[i * c + k].
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c)
      : height(h), width(w), channels(c), data(h * w * c, 0.0) {}

  std::size_t pixels() const noexcept { return height * width; }

  std::span<double> pixel(std::size_t i) {
    return {data.data() + i * channels, channels};
  }
  std::span<const double> pixel(std::size_t i) const {
    return {data.data() + i * channels, channels};
  }

  // Throws ContractError when the size or finiteness invariant is broken.
  void validate() const;

  bool operator==(const FeatureMap&) const = default;
};

// h x w map of values in [0,1]. Used for ground truth, pseudo masks,
// binarized predictions and posteriors alike.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), data(h * w, fill) {}

  std::size_t pixels() const noexcept { return height * width; }
  double& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return data[y * width + x]; }

  void validate() const;

  bool operator==(const Mask&) const = default;
};

// Per-pixel foreground probability.
using Posterior = Mask;

// 1 - m per pixel.
Mask complement(const Mask& m);

// Throws ContractError unless fg(i) + bg(i) == 1 within tol everywhere.
void check_mask_pair(const Mask& fg, const Mask& bg, double tol = 1e-9);

// Axis-aligned box in pixel units; covers columns [x, x+w) and rows [y, y+h).
struct Box {
  long x = 0;
  long y = 0;
  long w = 0;
  long h = 0;

  bool empty() const noexcept { return w <= 0 || h <= 0; }
  long area() const noexcept { return empty() ? 0 : w * h; }
  bool operator==(const Box&) const = default;
};

struct MemoryEntry {
  std::vector<double> key;  // unit L2 norm
  double fg = 0.0;
  double bg = 1.0;
};

// Flat key/value memory. Keys are stored contiguously (entry j at
// keys[j * channels]) so matching can stream over them. The first
// `initial_count` entries come from the initialization frame; baselines never
// evict them.
class MemoryBank {
 public:
  MemoryBank() = default;
  explicit MemoryBank(std::size_t channels) : channels_(channels) {}

  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return fg_.size(); }
  bool empty() const noexcept { return fg_.empty(); }
  std::size_t initial_count() const noexcept { return initial_count_; }

  std::span<const double> key(std::size_t j) const {
    return {keys_.data() + j * channels_, channels_};
  }
  std::span<double> key(std::size_t j) {
    return {keys_.data() + j * channels_, channels_};
  }
  double fg(std::size_t j) const { return fg_[j]; }
  double bg(std::size_t j) const { return bg_[j]; }
  void set_values(std::size_t j, double fg, double bg) {
    fg_[j] = fg;
    bg_[j] = bg;
  }

  std::span<const double> keys() const noexcept { return keys_; }
  std::span<const double> fg_values() const noexcept { return fg_; }
  std::span<const double> bg_values() const noexcept { return bg_; }

  MemoryEntry entry(std::size_t j) const;

  // Key must already be unit length; DimensionError on size mismatch.
  void append(std::span<const double> key, double fg, double bg);

  // Marks every current entry as part of the initialization frame.
  void seal_initial() noexcept { initial_count_ = size(); }

  // Removes the `count` oldest entries that follow the initial block.
  void evict_oldest_non_initial(std::size_t count);

  // Throws ContractError when a key is not unit-norm or fg + bg != 1.
  void validate(double tol = 1e-9) const;

  bool operator==(const MemoryBank&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t initial_count_ = 0;
  std::vector<double> keys_;
  std::vector<double> fg_;
  std::vector<double> bg_;
};

enum class Strategy { InitialOnly, AllFrames, Compact };

std::string_view to_string(Strategy s);
// Accepts "initial-only", "all-frames", "compact"; ContractError otherwise.
Strategy parse_strategy(std::string_view name);

struct CmeConfig {
  static constexpr std::size_t kDefaultTopK = 3;
  static constexpr double kDefaultZeta = 0.90;
  static constexpr double kDefaultBeta = 0.001;

  std::size_t top_k = kDefaultTopK;
  double zeta = kDefaultZeta;  // merge threshold on max correlation
  double beta = kDefaultBeta;  // fusion weight of the incoming feature
  Strategy strategy = Strategy::Compact;
  std::optional<std::size_t> all_frames_cap;

  void validate() const;
};

}  // namespace cme
