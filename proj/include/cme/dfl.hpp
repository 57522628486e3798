#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cme/types.hpp"

namespace cme {

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

// Learnable transforms of the deformable feature block:
//   query_proj  (d x c)  similarity projection of query pixels
//   ref_proj    (d x c)  similarity projection of reference pixels
//   value_proj  (d x c)  shared value transform, followed by ReLU
//   fuse_proj   (d x 2d) reduction of [aggregated ; transformed query], ReLU
struct DflParams {
  std::size_t channels = 0;
  std::size_t hidden = 0;
  Matrix query_proj;
  Matrix ref_proj;
  Matrix value_proj;
  Matrix fuse_proj;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const DflParams&) const = default;
};

// Gradients share DflParams' layout; seed is unused.
using DflGradients = DflParams;

struct DflOptions {
  // Scale the output by the initial-frame foreground probability. Disabling
  // it gives the "no posterior" ablation variant.
  bool apply_posterior = true;
};

// Everything the backward pass needs from a forward pass. All per-pixel
// quantities are (pixels x dim) matrices; n = h * w.
struct DflIntermediates {
  std::size_t height = 0;
  std::size_t width = 0;
  bool apply_posterior = true;
  Matrix query_emb;    // W_F f_i              n x d
  Matrix ref_emb;      // W_R r_j              n x d
  Matrix logits;       // z_ij                 n x n
  Matrix weights;      // row softmax of z     n x n
  Matrix ref_values;   // ReLU(W_v r_j)        n x d
  Matrix query_values; // ReLU(W_v f_i)        n x d
  Matrix aggregated;   // v_i                  n x d
  Matrix fused_pre;    // W_c [v_i ; ...]      n x d
  Matrix fused;        // ReLU(fused_pre)      n x d
  Matrix output;       // fused * p1(i)        n x d
};

struct DflResult {
  FeatureMap output;  // h x w x d
  DflIntermediates cache;
};

// Uniform Glorot-style draws: a = sqrt(6/(c+d)) for the three d x c
// transforms, a = sqrt(6/(3d)) for the fusion transform. Drawn in the order
// query, ref, value, fuse, row-major.
DflParams dfl_init_params(std::uint64_t seed, std::size_t channels, std::size_t hidden);

DflResult dfl_forward(const FeatureMap& query, const FeatureMap& reference, const Mask& p1_fg,
                      const DflParams& params, DflOptions opts = {});

// Gradients of L = sum(output_grad * output) w.r.t. all four transforms.
// output_grad is h x w x d. ContractError if the cache does not match.
DflGradients dfl_backward(const FeatureMap& output_grad, const DflIntermediates& cache,
                          const FeatureMap& query, const FeatureMap& reference, const Mask& p1_fg,
                          const DflParams& params);

// Visits the four matrices in canonical order with their display names.
template <class Params, class Fn>
void for_each_matrix(Params& p, Fn&& fn) {
  fn("query_proj", p.query_proj);
  fn("ref_proj", p.ref_proj);
  fn("value_proj", p.value_proj);
  fn("fuse_proj", p.fuse_proj);
}

DflGradients zero_gradients(const DflParams& params);

// "dfl-params v1" text dump.
std::string format_dfl_params(const DflParams& params);
DflParams parse_dfl_params(std::string_view text);
void save_dfl_params(const DflParams& params, const std::filesystem::path& path);
DflParams load_dfl_params(const std::filesystem::path& path);

// ---- gradient verification ------------------------------------------------

struct GradCheckEntry {
  std::string matrix;
  std::size_t row = 0;
  std::size_t col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> worst_per_matrix;  // one per parameter matrix
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is ~0 from dividing rounding noise by rounding noise.
double gradient_rel_error(double analytic, double numeric, double floor = 1e-6);

// Compares `analytic` against central differences of
// L(params) = sum(output_grad * dfl_forward(...)) for every parameter entry.
GradCheckReport check_gradients(const FeatureMap& query, const FeatureMap& reference,
                                const Mask& p1_fg, const DflParams& params,
                                const FeatureMap& output_grad, const DflGradients& analytic,
                                DflOptions opts = {}, double step = 1e-5);

// Seeded tiny problem for gradient checks: query/reference ~ U(-1, 1),
// p1 ~ U(0, 1) (or all zero), output gradient ~ N(0, 1), parameters from
// dfl_init_params(seed + 1, c, d).
struct GradCheckInstance {
  FeatureMap query;
  FeatureMap reference;
  Mask p1_fg;
  FeatureMap output_grad;
  DflParams params;
};

GradCheckInstance random_gradcheck_instance(std::uint64_t seed, std::size_t height,
                                            std::size_t width, std::size_t channels,
                                            std::size_t hidden, bool zero_mask = false);

// ---- toy training ---------------------------------------------------------

// Fixed per-pixel readout: probability = sigmoid(<probe, f_hat_i>).
std::vector<double> make_probe(std::uint64_t seed, std::size_t hidden);
Posterior dfl_readout(const FeatureMap& dfl_output, std::span<const double> probe);

struct ToyTrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t steps = 0;
};

// Plain gradient descent on mean binary cross-entropy between
// dfl_readout(dfl_forward(query, reference, p1_fg)) and `target`. The probe
// stays fixed; only the four transforms move.
ToyTrainReport train_dfl_toy(DflParams& params, const FeatureMap& query,
                             const FeatureMap& reference, const Mask& p1_fg, const Mask& target,
                             std::span<const double> probe, std::size_t steps,
                             double learning_rate, DflOptions opts = {});

}  // namespace cme
