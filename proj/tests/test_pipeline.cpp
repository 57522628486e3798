#include <cmath>
#include <cstring>

#include "doctest.h"

#include "cme/errors.hpp"
#include "cme/experiment.hpp"
#include "cme/matching.hpp"
#include "cme/scenario.hpp"
#include "cme/tracker.hpp"
#include "test_util.hpp"

using namespace cme;

namespace {

SyntheticScenario static_scene(std::uint64_t seed) {
  SyntheticScenario s;
  s.height = 16;
  s.width = 16;
  s.channels = 8;
  s.frame_count = 8;
  s.seed = seed;
  s.target = {7.5, 7.5, 0.0, 0.0, 3.0, 0.0, 10.0};
  return s;
}

Mask mask_from(std::size_t h, std::size_t w, std::initializer_list<int> bits) {
  Mask m(h, w);
  std::size_t i = 0;
  for (int b : bits) m.data[i++] = b;
  return m;
}

bool same_bytes(const FeatureMap& a, const FeatureMap& b) {
  return a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("generate_scenario") {
  SUBCASE("static scene repeats the target vector") {
    const auto seq = generate_scenario(static_scene(1));
    REQUIRE(seq.size() == 8);
    std::vector<double> first;
    for (const auto& f : seq) {
      for (std::size_t i = 0; i < f.truth.pixels(); ++i) {
        if (f.truth.data[i] != 1.0) continue;
        const auto p = f.features.pixel(i);
        if (first.empty()) first.assign(p.begin(), p.end());
        CHECK(std::vector<double>(p.begin(), p.end()) == first);
      }
      CHECK(f.truth == seq[0].truth);
    }
    CHECK(!first.empty());
  }
  SUBCASE("rho = 1 distractor is indistinguishable from the target") {
    SyntheticScenario s = static_scene(2);
    s.target = {4.5, 4.5, 0.0, 0.0, 2.0, 0.0, 10.0};
    s.distractor = Distractor{{11.5, 11.5, 0.0, 0.0, 2.0, 0.0, 10.0}, 1.0};
    const auto seq = generate_scenario(s);
    const auto& f = seq[3];
    const auto target = f.features.pixel(4 * 16 + 4);
    const auto distractor = f.features.pixel(11 * 16 + 11);
    CHECK(f.truth.data[4 * 16 + 4] == 1.0);
    CHECK(f.truth.data[11 * 16 + 11] == 0.0);
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(target[k] - distractor[k]) <= 1e-12);
  }
  SUBCASE("fixed seed is byte-identical") {
    const auto a = generate_scenario(testing::drift_scenario(9));
    const auto b = generate_scenario(testing::drift_scenario(9));
    const auto c = generate_scenario(testing::drift_scenario(10));
    for (std::size_t t = 0; t < a.size(); ++t) {
      CHECK(same_bytes(a[t].features, b[t].features));
      CHECK(a[t].truth == b[t].truth);
    }
    CHECK(!same_bytes(a[1].features, c[1].features));
  }
  SUBCASE("degenerate specs") {
    SyntheticScenario s = static_scene(1);
    s.target.radius = 0.0;
    CHECK_THROWS_AS(generate_scenario(s), ContractError);
    s = static_scene(1);
    s.channels = 3;
    CHECK_THROWS_AS(generate_scenario(s), ContractError);
    s = static_scene(1);
    s.noise_sigma = -1.0;
    CHECK_THROWS_AS(generate_scenario(s), ContractError);
  }
}

TEST_CASE("object state breathes in antiphase") {
  const ObjectTrack t{8.0, 8.0, 0.0, 0.0, 3.0, 0.5, 4.0};
  const ObjectState s = object_state(t, 1, 16, 16);  // sin(pi/2) = 1
  CHECK(s.half_w == doctest::Approx(4.5));
  CHECK(s.half_h == doctest::Approx(1.5));
}

TEST_CASE("parse_scenario") {
  const std::string text =
      "h = 16\nw = 16\nc = 8\nframe_count = 12\nseed = 4\nappearance_drift_rate = 0.1\n"
      "noise_sigma = 0.05\n\n[target]\ncenter = [5.5, 6.5]\nradius = 2.5\n"
      "velocity = [0.5, -0.25]\n\n[distractor]\ncenter = [11.0, 11.0]\nradius = 2.0\n"
      "similarity = 0.8\n";
  const SyntheticScenario s = parse_scenario(text);
  CHECK(s.height == 16);
  CHECK(s.frame_count == 12);
  CHECK(s.target.center_y == 6.5);
  CHECK(s.target.velocity_y == -0.25);
  REQUIRE(s.distractor.has_value());
  CHECK(s.distractor->similarity == 0.8);

  const std::string missing = "h = 16\nw = 16\nc = 8\nseed = 4\n[target]\ncenter = [5, 5]\nradius = 2\n";
  try {
    parse_scenario(missing);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.where() == "frame_count");
  }
  const std::string no_radius = "h = 16\nw = 16\nc = 8\nframe_count = 3\nseed = 4\n[target]\ncenter = [5, 5]\n";
  try {
    parse_scenario(no_radius);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.where() == "target.radius");
  }
}

TEST_CASE("pseudo_mask_from_box") {
  CHECK(pseudo_mask_from_box({0, 0, 4, 3}, 3, 4) == Mask(3, 4, 1.0));
  const Mask one = pseudo_mask_from_box({0, 0, 1, 1}, 3, 4);
  CHECK(one.data[0] == 1.0);
  double sum = 0.0;
  for (double v : one.data) sum += v;
  CHECK(sum == 1.0);
  CHECK_THROWS_AS(pseudo_mask_from_box({1, 1, 0, 2}, 3, 4), ContractError);
}

TEST_CASE("crop_query_region") {
  const FeatureMap frame = testing::random_map(1, 8, 8, 4);
  SUBCASE("full-frame box clamps to the frame") {
    const Crop c = crop_query_region(frame, {0, 0, 8, 8});
    CHECK(c.region == Box{0, 0, 8, 8});
    CHECK(c.features == frame);
  }
  SUBCASE("centered 2x2 box gives a 4x4 crop") {
    const Crop c = crop_query_region(frame, {3, 3, 2, 2});
    CHECK(c.region == Box{2, 2, 4, 4});
    CHECK(c.features.height == 4);
    CHECK(c.features.width == 4);
    for (std::size_t k = 0; k < 4; ++k) CHECK(c.features.pixel(0)[k] == frame.pixel(2 * 8 + 2)[k]);
  }
  SUBCASE("corner boxes") {
    // Unclamped window is [x - w/2, x - w/2 + 2w) per axis.
    CHECK(query_region({0, 0, 2, 2}, 8, 8) == Box{0, 0, 3, 3});  // [-1, 3)
    CHECK(query_region({6, 6, 2, 2}, 8, 8) == Box{5, 5, 3, 3});  // [5, 9)
    CHECK(query_region({0, 5, 3, 3}, 8, 8) == Box{0, 4, 5, 4});  // x [-1, 5), y [4, 10)
    const Crop c = crop_query_region(frame, {6, 6, 2, 2});
    CHECK(c.features.pixel(0)[0] == frame.pixel(5 * 8 + 5)[0]);
  }
}

TEST_CASE("crop and paste masks") {
  const Mask m = testing::random_binary_mask(3, 6, 7);
  const Box region{2, 1, 3, 4};
  const Mask patch = crop_mask(m, region);
  CHECK(patch.height == 4);
  CHECK(patch.width == 3);
  Mask dst(6, 7);
  paste_mask(dst, patch, region);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 7; ++x) {
      const bool in = x >= 2 && x < 5 && y >= 1 && y < 5;
      CHECK(dst.at(y, x) == (in ? m.at(y, x) : 0.0));
    }
}

TEST_CASE("binarize") {
  CHECK(binarize(Mask(2, 2, 0.5)) == Mask(2, 2, 1.0));
  CHECK(binarize(Mask(2, 2, 0.4)) == Mask(2, 2, 0.0));
  Mask p(1, 3);
  p.data = {0.0, 0.7, 0.49};
  CHECK(binarize(p).data == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("box_from_mask") {
  SUBCASE("single pixel") {
    Mask m(5, 5);
    m.at(2, 3) = 1.0;  // row 2, column 3
    const auto b = box_from_mask(m);
    REQUIRE(b.has_value());
    CHECK(*b == Box{3, 2, 1, 1});
  }
  SUBCASE("largest of two components") {
    // 3-pixel L at the top left, 5-pixel plus on the right.
    const Mask m = mask_from(5, 6, {
        1, 1, 0, 0, 0, 0,
        1, 0, 0, 0, 1, 0,
        0, 0, 0, 1, 1, 1,
        0, 0, 0, 0, 1, 0,
        0, 0, 0, 0, 0, 0});
    const auto b = box_from_mask(m);
    REQUIRE(b.has_value());
    CHECK(*b == Box{3, 1, 3, 3});
  }
  SUBCASE("diagonal pixels are separate components") {
    const Mask m = mask_from(2, 2, {1, 0, 0, 1});
    CHECK(*box_from_mask(m) == Box{0, 0, 1, 1});
  }
  SUBCASE("empty") { CHECK(!box_from_mask(Mask(3, 3)).has_value()); }
}

TEST_CASE("compute_iou") {
  const Mask a = mask_from(1, 4, {1, 1, 1, 0});
  const Mask b = mask_from(1, 4, {0, 1, 1, 1});
  CHECK(compute_iou(a, a) == 1.0);
  CHECK(compute_iou(a, mask_from(1, 4, {0, 0, 0, 1})) == 0.0);
  CHECK(compute_iou(a, b) == 0.5);
  CHECK(compute_iou(b, a) == compute_iou(a, b));
  CHECK(compute_iou(Mask(1, 4), Mask(1, 4)) == 1.0);
  CHECK_THROWS_AS(compute_iou(a, Mask(2, 2)), DimensionError);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Mask x = testing::random_binary_mask(s, 5, 5);
    const Mask y = testing::random_binary_mask(s + 99, 5, 5);
    const double iou = compute_iou(x, y);
    CHECK(iou >= 0.0);
    CHECK(iou <= 1.0);
    CHECK(iou == compute_iou(y, x));
  }
}

TEST_CASE("static scene tracks perfectly for every strategy and DFL mode") {
  for (Strategy st : {Strategy::InitialOnly, Strategy::AllFrames, Strategy::Compact}) {
    for (DflMode mode : {DflMode::Off, DflMode::Full, DflMode::NoPosterior}) {
      CmeConfig cfg;
      cfg.strategy = st;
      TrackerFlags flags;
      flags.dfl = mode;
      const auto results = run_tracker(generate_scenario(static_scene(3)), cfg, flags);
      const RunSummary s = summarize(results);
      INFO(to_string(st), " ", to_string(mode));
      CHECK(s.mean_iou >= 0.99);
    }
  }
}

TEST_CASE("frame 1 is matched against the initial bank under every strategy") {
  const auto seq = generate_scenario(testing::drift_scenario(5));
  std::vector<Posterior> first;
  for (Strategy st : {Strategy::InitialOnly, Strategy::AllFrames, Strategy::Compact}) {
    CmeConfig cfg;
    cfg.strategy = st;
    const auto r = run_tracker(seq, cfg, {});
    first.push_back(r[1].posterior);
  }
  CHECK(first[0] == first[1]);
  CHECK(first[0] == first[2]);
}

TEST_CASE("tracker telemetry and determinism") {
  SyntheticScenario s = testing::drift_scenario(6, 8);
  s.distractor = Distractor{{2.5, 9.5, 0.3, 0.0, 1.5, 0.0, 10.0}, 0.6};
  const auto seq = generate_scenario(s);
  for (DflMode mode : {DflMode::Off, DflMode::Full}) {
    TrackerFlags flags;
    flags.dfl = mode;
    const auto a = run_tracker(seq, {}, flags);
    const auto b = run_tracker(seq, {}, flags);
    REQUIRE(a.size() == seq.size());
    CHECK(frames_csv(a) == frames_csv(b));
    for (std::size_t t = 0; t < a.size(); ++t) {
      CHECK(a[t].posterior == b[t].posterior);
      CHECK(a[t].box == b[t].box);
      CHECK(a[t].iou >= 0.0);
      CHECK(a[t].iou <= 1.0);
      if (t == 0) continue;
      const auto& r = a[t].report;
      CHECK(r.merged_count + r.expanded_count + r.discarded_count ==
            static_cast<std::size_t>(a[t].crop.area()));
    }
  }
}

TEST_CASE("initial-only leaves the bank size unchanged") {
  CmeConfig cfg;
  cfg.strategy = Strategy::InitialOnly;
  const auto r = run_tracker(generate_scenario(testing::drift_scenario(7)), cfg, {});
  for (std::size_t t = 1; t < r.size(); ++t)
    CHECK(r[t].report.bank_size_after == r[t].report.bank_size_before);
}

TEST_CASE("ablation rows are complete and ordered") {
  SyntheticScenario base = testing::drift_scenario(0, 5);
  const std::vector<std::uint64_t> seeds = {3, 1};
  const auto rows = run_ablation(base, seeds, {}, {}, ablation_variants());
  REQUIRE(rows.size() == 12);
  CHECK(rows[0].seed == 3);
  CHECK(rows[0].variant == "baseline");
  CHECK(rows[5].variant == "+cme+dfl");
  CHECK(rows[6].seed == 1);

  // A cell equals the standalone run of the same configuration.
  base.seed = 1;
  CmeConfig cfg;
  cfg.strategy = Strategy::Compact;
  const auto alone = summarize(run_tracker(generate_scenario(base), cfg, {}));
  CHECK(rows[6 + 4].variant == "+cme");
  CHECK(rows[6 + 4].mean_iou == alone.mean_iou);
  CHECK(rows[6 + 4].final_bank_size == alone.final_bank_size);

  const auto means = variant_means(rows, ablation_variants());
  CHECK(means.size() == 6);
  CHECK(means[0].mean_iou == doctest::Approx((rows[0].mean_iou + rows[6].mean_iou) / 2));
}
