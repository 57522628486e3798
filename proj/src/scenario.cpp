#include "cme/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cme/errors.hpp"
#include "cme/rng.hpp"
#include "toml_lite.hpp"

namespace cme {
namespace {

double max_extent(const ObjectTrack& t) { return t.radius * (1.0 + t.deformation); }

// Position after `t` steps of unit-speed motion reflected inside [lo, hi].
double bounce(double start, double velocity, double t, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) return 0.5 * (lo + hi);
  double u = std::fmod(start + velocity * t - lo, 2.0 * span);
  if (u < 0.0) u += 2.0 * span;
  if (u > span) u = 2.0 * span - u;
  return lo + u;
}

void validate_track(const ObjectTrack& t, const SyntheticScenario& s, const char* who) {
  const std::string name(who);
  if (!(t.radius > 0.0)) throw ContractError(name + ": radius must be positive");
  if (!(t.deformation >= 0.0 && t.deformation < 1.0)) {
    throw ContractError(name + ": deformation must lie in [0,1)");
  }
  if (!(t.deformation_period > 0.0)) throw ContractError(name + ": deformation_period must be positive");
  const double need = 2.0 * max_extent(t);
  const double room = static_cast<double>(std::min(s.height, s.width)) - 1.0;
  if (need > room) throw ContractError(name + ": object does not fit inside the frame");
  auto inside = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  const double m = max_extent(t);
  if (!inside(t.center_x, m, static_cast<double>(s.width) - 1.0 - m) ||
      !inside(t.center_y, m, static_cast<double>(s.height) - 1.0 - m)) {
    throw ContractError(name + ": initial center places the object outside the frame");
  }
}

// Gram-Schmidt on seeded Gaussian draws; the first `count` columns of an
// orthonormal frame in R^c.
std::vector<std::vector<double>> orthonormal_basis(Rng& rng, std::size_t c, std::size_t count) {
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(c);
    for (double& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += v[k] * b[k];
      for (std::size_t k = 0; k < c; ++k) v[k] -= dot * b[k];
    }
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

ObjectTrack parse_track(const toml_lite::Document& doc, const std::string& table) {
  ObjectTrack t;
  const auto center = doc.array(table + ".center");
  if (center.size() != 2) throw FormatError(table + ".center", "expected [x, y]");
  t.center_x = center[0];
  t.center_y = center[1];
  t.radius = doc.number(table + ".radius");
  if (doc.contains(table + ".velocity")) {
    const auto v = doc.array(table + ".velocity");
    if (v.size() != 2) throw FormatError(table + ".velocity", "expected [vx, vy]");
    t.velocity_x = v[0];
    t.velocity_y = v[1];
  }
  t.deformation = doc.number_or(table + ".deformation", 0.0);
  t.deformation_period = doc.number_or(table + ".deformation_period", 10.0);
  return t;
}

std::size_t positive_count(const toml_lite::Document& doc, const std::string& key) {
  const long long v = doc.integer(key);
  if (v <= 0) throw FormatError(key, "must be a positive integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

bool ObjectState::contains(std::size_t x, std::size_t y) const {
  return std::abs(static_cast<double>(x) - center_x) <= half_w &&
         std::abs(static_cast<double>(y) - center_y) <= half_h;
}

void SyntheticScenario::validate() const {
  if (height == 0 || width == 0) throw ContractError("scenario: h and w must be positive");
  if (channels < 4) throw ContractError("scenario: c must be at least 4");
  if (frame_count == 0) throw ContractError("scenario: frame_count must be positive");
  if (!(noise_sigma >= 0.0)) throw ContractError("scenario: noise_sigma must be >= 0");
  if (!std::isfinite(appearance_drift_rate)) throw ContractError("scenario: drift rate not finite");
  validate_track(target, *this, "target");
  if (distractor) {
    validate_track(distractor->track, *this, "distractor");
    if (!(distractor->similarity >= 0.0 && distractor->similarity <= 1.0)) {
      throw ContractError("distractor: similarity must lie in [0,1]");
    }
  }
}

ObjectState object_state(const ObjectTrack& track, std::size_t frame, std::size_t height,
                         std::size_t width) {
  const double t = static_cast<double>(frame);
  const double m = max_extent(track);
  ObjectState s;
  s.center_x = bounce(track.center_x, track.velocity_x, t, m, static_cast<double>(width) - 1.0 - m);
  s.center_y = bounce(track.center_y, track.velocity_y, t, m, static_cast<double>(height) - 1.0 - m);
  const double phase = std::sin(2.0 * std::numbers::pi * t / track.deformation_period);
  s.half_w = track.radius * (1.0 + track.deformation * phase);
  s.half_h = track.radius * (1.0 - track.deformation * phase);
  return s;
}

Sequence generate_scenario(const SyntheticScenario& spec) {
  spec.validate();
  const std::size_t c = spec.channels;
  Rng rng(spec.seed);
  const auto basis = orthonormal_basis(rng, c, 4);
  const auto& base = basis[0];
  const auto& drift_dir = basis[1];
  const auto& distract_dir = basis[2];
  const auto& background = basis[3];

  Sequence seq;
  seq.reserve(spec.frame_count);
  std::vector<double> target_vec(c);
  std::vector<double> distractor_vec(c);
  for (std::size_t t = 0; t < spec.frame_count; ++t) {
    const double angle = spec.appearance_drift_rate * static_cast<double>(t);
    for (std::size_t k = 0; k < c; ++k) {
      target_vec[k] = std::cos(angle) * base[k] + std::sin(angle) * drift_dir[k];
    }
    if (spec.distractor) {
      const double rho = spec.distractor->similarity;
      const double ortho = std::sqrt(std::max(0.0, 1.0 - rho * rho));
      for (std::size_t k = 0; k < c; ++k) {
        distractor_vec[k] = rho * target_vec[k] + ortho * distract_dir[k];
      }
    }
    const ObjectState target = object_state(spec.target, t, spec.height, spec.width);
    std::optional<ObjectState> other;
    if (spec.distractor) other = object_state(spec.distractor->track, t, spec.height, spec.width);

    SequenceFrame frame{FeatureMap(spec.height, spec.width, c), Mask(spec.height, spec.width)};
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        const std::size_t i = y * spec.width + x;
        const std::vector<double>* src = &background;
        if (target.contains(x, y)) {
          src = &target_vec;
          frame.truth.data[i] = 1.0;
        } else if (other && other->contains(x, y)) {
          src = &distractor_vec;
        }
        auto px = frame.features.pixel(i);
        for (std::size_t k = 0; k < c; ++k) px[k] = (*src)[k];
        if (spec.noise_sigma > 0.0) {
          for (std::size_t k = 0; k < c; ++k) px[k] += spec.noise_sigma * rng.normal();
        }
      }
    }
    seq.push_back(std::move(frame));
  }
  return seq;
}

SyntheticScenario parse_scenario(std::string_view toml_text) {
  const auto doc = toml_lite::Document::parse(toml_text);
  SyntheticScenario s;
  s.height = positive_count(doc, "h");
  s.width = positive_count(doc, "w");
  s.channels = positive_count(doc, "c");
  s.frame_count = positive_count(doc, "frame_count");
  const long long seed = doc.integer("seed");
  if (seed < 0) throw FormatError("seed", "must be non-negative");
  s.seed = static_cast<std::uint64_t>(seed);
  s.appearance_drift_rate = doc.number_or("appearance_drift_rate", 0.0);
  s.noise_sigma = doc.number_or("noise_sigma", 0.0);
  s.target = parse_track(doc, "target");
  if (doc.has_table("distractor")) {
    Distractor d;
    d.track = parse_track(doc, "distractor");
    d.similarity = doc.number("distractor.similarity");
    s.distractor = d;
  }
  return s;
}

}  // namespace cme
