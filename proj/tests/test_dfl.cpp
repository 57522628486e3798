#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"

#include "cme/dfl.hpp"
#include "cme/errors.hpp"
#include "cme/parallel.hpp"
#include "naive.hpp"
#include "test_util.hpp"

using namespace cme;

namespace {

oracle::NaiveDflWeights to_naive(const DflParams& p) {
  return {p.channels, p.hidden, p.query_proj.data, p.ref_proj.data, p.value_proj.data,
          p.fuse_proj.data};
}

Mask random_soft_mask(std::uint64_t seed, std::size_t h, std::size_t w) {
  Rng rng(seed);
  Mask m(h, w);
  for (double& v : m.data) v = rng.uniform();
  return m;
}

bool all_zero(const Matrix& m) {
  for (double v : m.data)
    if (v != 0.0) return false;
  return true;
}

}  // namespace

TEST_CASE("dfl_init_params") {
  const DflParams a = dfl_init_params(3, 4, 4);
  const DflParams b = dfl_init_params(3, 4, 4);
  CHECK(a == b);
  CHECK(dfl_init_params(4, 4, 4).query_proj != a.query_proj);
  CHECK(a.query_proj.rows == 4);
  CHECK(a.fuse_proj.cols == 8);
  const double bound = std::sqrt(6.0 / 8.0);
  for (const Matrix* m : {&a.query_proj, &a.ref_proj, &a.value_proj})
    for (double v : m->data) CHECK(std::abs(v) <= bound);
  for (double v : a.fuse_proj.data) CHECK(std::abs(v) <= std::sqrt(6.0 / 12.0));
  CHECK_THROWS_AS(dfl_init_params(1, 0, 4), ContractError);
}

TEST_CASE("dfl_forward") {
  SUBCASE("zero p1 annihilates the output") {
    const FeatureMap q = testing::random_map(1, 3, 3, 4);
    const FeatureMap r = testing::random_map(2, 3, 3, 4);
    const auto res = dfl_forward(q, r, Mask(3, 3, 0.0), dfl_init_params(5, 4, 4));
    for (double v : res.output.data) CHECK(v == 0.0);
  }
  SUBCASE("no-posterior mode skips the gate") {
    const FeatureMap q = testing::random_map(1, 3, 3, 4);
    const FeatureMap r = testing::random_map(2, 3, 3, 4);
    const auto res = dfl_forward(q, r, Mask(3, 3, 0.0), dfl_init_params(5, 4, 4), {false});
    CHECK(res.output.data == res.cache.fused.data);
  }
  SUBCASE("constant reference gives identical aggregates") {
    const FeatureMap q = testing::random_map(3, 3, 3, 4);
    FeatureMap r(3, 3, 4);
    const FeatureMap one = testing::random_map(4, 1, 1, 4);
    for (std::size_t i = 0; i < r.pixels(); ++i)
      std::copy(one.data.begin(), one.data.end(), r.pixel(i).begin());
    const auto res = dfl_forward(q, r, random_soft_mask(5, 3, 3), dfl_init_params(6, 4, 5));
    const Matrix& v = res.cache.aggregated;
    for (std::size_t i = 1; i < v.rows; ++i)
      for (std::size_t k = 0; k < v.cols; ++k) CHECK(std::abs(v(i, k) - v(0, k)) <= 1e-12);
  }
  SUBCASE("matches the straight-loop oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const FeatureMap q = testing::random_map(seed, 3, 3, 4);
      const FeatureMap r = testing::random_map(seed + 100, 3, 3, 4);
      const Mask p1 = random_soft_mask(seed + 200, 3, 3);
      const DflParams params = dfl_init_params(seed + 300, 4, 3);
      for (bool gate : {true, false}) {
        const auto res = dfl_forward(q, r, p1, params, {gate});
        const FeatureMap ref = oracle::naive_dfl_forward(q, r, p1, to_naive(params), gate);
        REQUIRE(res.output.data.size() == ref.data.size());
        for (std::size_t k = 0; k < ref.data.size(); ++k)
          CHECK(std::abs(res.output.data[k] - ref.data[k]) <= 1e-10);
      }
    }
  }
  SUBCASE("dimension mismatch") {
    const DflParams params = dfl_init_params(1, 4, 4);
    CHECK_THROWS_AS(dfl_forward(testing::random_map(1, 2, 2, 4), testing::random_map(2, 2, 3, 4),
                                Mask(2, 2, 1.0), params),
                    ContractError);
    CHECK_THROWS_AS(dfl_forward(testing::random_map(1, 2, 2, 3), testing::random_map(2, 2, 2, 3),
                                Mask(2, 2, 1.0), params),
                    ContractError);
    CHECK_THROWS_AS(dfl_forward(testing::random_map(1, 2, 2, 4), testing::random_map(2, 2, 2, 4),
                                Mask(1, 2, 1.0), params),
                    ContractError);
  }
}

TEST_CASE("attention weights") {
  const FeatureMap q = testing::random_map(10, 3, 4, 5);
  const FeatureMap r = testing::random_map(11, 3, 4, 5);
  const Mask p1 = random_soft_mask(12, 3, 4);
  const DflParams params = dfl_init_params(13, 5, 4);
  const auto res = dfl_forward(q, r, p1, params);
  const std::size_t n = q.pixels();

  SUBCASE("rows sum to one") {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += res.cache.weights(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
  SUBCASE("row shift invariance") {
    // Adding t to the query embedding along ref_emb's mean direction is
    // awkward; shift the logits directly through a 1-channel reference
    // offset instead: softmax(z + c) == softmax(z). Checked on the logits.
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> z(res.cache.logits.row(i).begin(), res.cache.logits.row(i).end());
      auto softmax = [](std::vector<double> v) {
        double m = v[0];
        for (double x : v) m = std::max(m, x);
        double s = 0.0;
        for (double& x : v) s += (x = std::exp(x - m));
        for (double& x : v) x /= s;
        return v;
      };
      const auto base = softmax(z);
      for (double& x : z) x += 37.5;
      const auto shifted = softmax(z);
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(std::abs(base[j] - shifted[j]) <= 1e-12);
        CHECK(std::abs(base[j] - res.cache.weights(i, j)) <= 1e-12);
      }
    }
  }
  SUBCASE("reference permutation equivariance") {
    std::vector<std::size_t> perm(n);
    for (std::size_t j = 0; j < n; ++j) perm[j] = (j * 5 + 3) % n;  // 5 is coprime to 12
    FeatureMap rp = r;
    for (std::size_t j = 0; j < n; ++j)
      std::copy(r.pixel(perm[j]).begin(), r.pixel(perm[j]).end(), rp.pixel(j).begin());
    const auto res_p = dfl_forward(q, rp, p1, params);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(std::abs(res_p.cache.logits(i, j) - res.cache.logits(i, perm[j])) <= 1e-12);
        CHECK(std::abs(res_p.cache.weights(i, j) - res.cache.weights(i, perm[j])) <= 1e-12);
      }
      for (std::size_t k = 0; k < params.hidden; ++k)
        CHECK(std::abs(res_p.cache.aggregated(i, k) - res.cache.aggregated(i, k)) <= 1e-12);
    }
  }
}

TEST_CASE("dfl_backward") {
  SUBCASE("zero p1 gives zero gradients") {
    const auto inst = random_gradcheck_instance(1, 2, 2, 3, 3, true);
    const auto res = dfl_forward(inst.query, inst.reference, inst.p1_fg, inst.params);
    const auto g = dfl_backward(inst.output_grad, res.cache, inst.query, inst.reference,
                                inst.p1_fg, inst.params);
    for_each_matrix(g, [](const char*, const Matrix& m) { CHECK(all_zero(m)); });
  }
  SUBCASE("zero upstream gradient gives zero gradients") {
    const auto inst = random_gradcheck_instance(2, 2, 2, 3, 3);
    const auto res = dfl_forward(inst.query, inst.reference, inst.p1_fg, inst.params);
    FeatureMap zero(2, 2, 3);
    const auto g =
        dfl_backward(zero, res.cache, inst.query, inst.reference, inst.p1_fg, inst.params);
    for_each_matrix(g, [](const char*, const Matrix& m) { CHECK(all_zero(m)); });
  }
  SUBCASE("matches central differences on 2x2x3, d=3") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto inst = random_gradcheck_instance(seed, 2, 2, 3, 3);
      for (bool gate : {true, false}) {
        const auto res = dfl_forward(inst.query, inst.reference, inst.p1_fg, inst.params, {gate});
        FeatureMap og = inst.output_grad;
        const auto g = dfl_backward(og, res.cache, inst.query, inst.reference, inst.p1_fg,
                                    inst.params);
        const auto report = check_gradients(inst.query, inst.reference, inst.p1_fg, inst.params,
                                            og, g, {gate});
        CHECK(report.max_rel_error < 1e-4);
        CHECK(report.worst_per_matrix.size() == 4);
      }
    }
  }
  SUBCASE("a corrupted gradient is caught") {
    const auto inst = random_gradcheck_instance(7, 2, 2, 3, 3);
    const auto res = dfl_forward(inst.query, inst.reference, inst.p1_fg, inst.params);
    auto g = dfl_backward(inst.output_grad, res.cache, inst.query, inst.reference, inst.p1_fg,
                          inst.params);
    g.fuse_proj.data[0] += 0.1;
    const auto report = check_gradients(inst.query, inst.reference, inst.p1_fg, inst.params,
                                        inst.output_grad, g);
    CHECK(report.max_rel_error > 1e-4);
  }
  SUBCASE("stale cache is rejected") {
    const auto a = random_gradcheck_instance(3, 2, 2, 3, 3);
    const auto b = random_gradcheck_instance(3, 2, 3, 3, 3);
    const auto res = dfl_forward(a.query, a.reference, a.p1_fg, a.params);
    CHECK_THROWS_AS(
        dfl_backward(b.output_grad, res.cache, b.query, b.reference, b.p1_fg, b.params),
        ContractError);
  }
}

TEST_CASE("gradient relative error floor") {
  CHECK(gradient_rel_error(1.0, 1.0) == 0.0);
  CHECK(gradient_rel_error(1e-12, 0.0) == doctest::Approx(1e-6));
  CHECK(gradient_rel_error(2.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("dfl params text round trip") {
  const DflParams p = dfl_init_params(9, 5, 3);
  const DflParams back = parse_dfl_params(format_dfl_params(p));
  CHECK(back == p);
  CHECK(format_dfl_params(p).rfind("dfl-params v1\n", 0) == 0);
  const auto path = std::filesystem::temp_directory_path() / "cme_unit_dfl.txt";
  save_dfl_params(p, path);
  CHECK(load_dfl_params(path) == p);
  CHECK_THROWS_AS(parse_dfl_params("dfl-params v2\n1 1 0\n"), FormatError);
}

TEST_CASE("toy training lowers the loss") {
  const FeatureMap q = testing::random_map(20, 4, 4, 6);
  const FeatureMap r = testing::random_map(21, 4, 4, 6);
  const Mask target = testing::random_binary_mask(22, 4, 4, 0.5);
  DflParams params = dfl_init_params(23, 6, 6);
  const auto probe = make_probe(24, 6);
  const auto report = train_dfl_toy(params, q, r, Mask(4, 4, 1.0), target, probe, 50, 0.5);
  CHECK(report.steps == 50);
  CHECK(report.final_loss < report.initial_loss);
}

TEST_CASE("dfl kernels are bit-identical across thread counts") {
  const auto inst = random_gradcheck_instance(30, 6, 6, 8, 8);
  const int saved = thread_count();
  set_thread_count(1);
  const auto f1 = dfl_forward(inst.query, inst.reference, inst.p1_fg, inst.params);
  const auto g1 = dfl_backward(inst.output_grad, f1.cache, inst.query, inst.reference,
                               inst.p1_fg, inst.params);
  set_thread_count(8);
  const auto f8 = dfl_forward(inst.query, inst.reference, inst.p1_fg, inst.params);
  const auto g8 = dfl_backward(inst.output_grad, f8.cache, inst.query, inst.reference,
                               inst.p1_fg, inst.params);
  set_thread_count(saved);
  CHECK(f1.output == f8.output);
  CHECK(g1 == g8);
}
