#include <cstring>
#include <filesystem>
#include <string>

#include "doctest.h"

#include "cme/errors.hpp"
#include "cme/io.hpp"
#include "cme/rng.hpp"
#include "cme/types.hpp"
#include "test_util.hpp"

using namespace cme;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cme_unit";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("minimal feature map file loads") {
  const std::string text = "2 2 3\n1 2 3\n4 5 6\n7 8 9\n10 11 12\n";
  const FeatureMap fm = parse_feature_map(text);
  CHECK(fm.height == 2);
  CHECK(fm.width == 2);
  CHECK(fm.channels == 3);
  CHECK(fm.data.size() == 12);
  CHECK(fm.pixel(3)[2] == 12.0);
}

TEST_CASE("short feature map file reports the first missing value") {
  const std::string text = "2 2 3\n1 2 3 4 5 6 7 8 9 10 11\n";
  try {
    parse_feature_map(text);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.where() == "value 12");
  }
}

TEST_CASE("feature map format errors name the field") {
  auto where_of = [](const std::string& text) {
    try {
      parse_feature_map(text);
    } catch (const FormatError& e) {
      return e.where();
    }
    return std::string("none");
  };
  CHECK(where_of("2 x 3\n") == "header.w");
  CHECK(where_of("2 2\n1 2 3 4\n") == "header.c");
  CHECK(where_of("1 1 2\n1 nan\n") == "value 2");
  CHECK(where_of("1 1 2\n1 inf\n") == "value 2");
  CHECK(where_of("1 1 2\n1 abc\n") == "value 2");
  CHECK(where_of("1 1 2\n1 2 3\n") == "value 3");
  CHECK(where_of("0 1 2\n") == "header");
}

TEST_CASE("feature map save/load round trip is bit exact") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng dims(seed);
    const std::size_t h = 1 + dims.next_u64() % 5;
    const std::size_t w = 1 + dims.next_u64() % 5;
    const std::size_t c = 1 + dims.next_u64() % 6;
    FeatureMap fm = testing::random_map(seed, h, w, c);
    // Mix in awkward magnitudes.
    fm.data[0] *= 1e-300;
    fm.data.back() *= 1e200;
    const FeatureMap back = parse_feature_map(format_feature_map(fm));
    REQUIRE(back.data.size() == fm.data.size());
    CHECK(std::memcmp(back.data.data(), fm.data.data(), fm.data.size() * sizeof(double)) == 0);
  }
  const fs::path p = temp_path("round_trip.txt");
  const FeatureMap fm = testing::random_map(42, 3, 4, 5);
  save_feature_map(fm, p);
  CHECK(load_feature_map(p) == fm);
}

TEST_CASE("mask PGM encoding") {
  SUBCASE("all zero") {
    const std::string pgm = format_mask_pgm(Mask(2, 2, 0.0));
    CHECK(pgm == "P2\n2 2\n255\n0 0\n0 0\n");
  }
  SUBCASE("all one") {
    const std::string pgm = format_mask_pgm(Mask(2, 2, 1.0));
    CHECK(pgm == "P2\n2 2\n255\n255 255\n255 255\n");
  }
  SUBCASE("half rounds up to 128, verified by decoding the written file") {
    Mask m(1, 3, 0.0);
    m.data = {0.5, 0.25, 1.0};
    const fs::path p = temp_path("half.pgm");
    save_mask_pgm(m, p);
    const Mask back = load_mask_pgm(p);
    CHECK(back.data[0] * 255.0 == doctest::Approx(128.0));
    CHECK(back.data[1] * 255.0 == doctest::Approx(64.0));  // 63.75 -> 64
    CHECK(back.data[2] == 1.0);
  }
  SUBCASE("binary masks round trip exactly") {
    const Mask m = testing::random_binary_mask(3, 4, 5);
    CHECK(parse_mask_pgm(format_mask_pgm(m)) == m);
  }
  SUBCASE("unwritable path is an I/O error") {
    CHECK_THROWS_AS(save_mask_pgm(Mask(1, 1), "/nonexistent-dir/x/y.pgm"), IoError);
  }
}

TEST_CASE("seeded generation is reproducible") {
  const FeatureMap a = testing::random_map(7, 4, 4, 8);
  const FeatureMap b = testing::random_map(7, 4, 4, 8);
  CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
  CHECK(testing::random_map(8, 4, 4, 8) != a);

  // First outputs of mt19937_64 with the standard default seed.
  Rng rng(5489);
  CHECK(rng.next_u64() == 14514284786278117030ULL);
  Rng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
  }
}

TEST_CASE("feature map and mask validation") {
  FeatureMap fm(1, 1, 2);
  fm.data[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fm.validate(), ContractError);
  fm.data.pop_back();
  CHECK_THROWS_AS(fm.validate(), ContractError);

  Mask m(1, 2);
  m.data[0] = 1.5;
  CHECK_THROWS_AS(m.validate(), ContractError);

  Mask fg(1, 2, 0.25);
  CHECK_NOTHROW(check_mask_pair(fg, complement(fg)));
  CHECK_THROWS_AS(check_mask_pair(fg, fg), ContractError);
}

TEST_CASE("memory bank bookkeeping") {
  MemoryBank bank(2);
  const double k1[] = {1.0, 0.0};
  const double k2[] = {0.0, 1.0};
  bank.append(k1, 1.0, 0.0);
  bank.seal_initial();
  bank.append(k2, 0.0, 1.0);
  bank.append(k1, 0.5, 0.5);
  CHECK(bank.size() == 3);
  CHECK(bank.initial_count() == 1);
  CHECK_NOTHROW(bank.validate());

  const double bad[] = {1.0};
  CHECK_THROWS_AS(bank.append(bad, 1.0, 0.0), DimensionError);

  bank.evict_oldest_non_initial(1);
  CHECK(bank.size() == 2);
  CHECK(bank.fg(1) == 0.5);
  bank.evict_oldest_non_initial(10);
  CHECK(bank.size() == 1);
  CHECK(bank.entry(0).key == std::vector<double>{1.0, 0.0});

  MemoryBank skewed(2);
  const double k3[] = {2.0, 0.0};
  skewed.append(k3, 1.0, 0.0);
  CHECK_THROWS_AS(skewed.validate(), ContractError);
}

TEST_CASE("CME config defaults and validation") {
  const CmeConfig cfg;
  CHECK(cfg.top_k == 3);
  CHECK(cfg.zeta == 0.90);
  CHECK(cfg.beta == 0.001);
  CHECK(cfg.strategy == Strategy::Compact);

  CmeConfig bad = cfg;
  bad.top_k = 0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = cfg;
  bad.zeta = 0.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
  bad = cfg;
  bad.beta = 1.5;
  CHECK_THROWS_AS(bad.validate(), ContractError);

  CHECK(parse_strategy("initial-only") == Strategy::InitialOnly);
  CHECK(parse_strategy(to_string(Strategy::AllFrames)) == Strategy::AllFrames);
  CHECK_THROWS_AS(parse_strategy("everything"), ContractError);
}
