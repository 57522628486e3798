#include "cme/dfl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <string>

#include "cme/errors.hpp"
#include "cme/io.hpp"
#include "cme/rng.hpp"

namespace cme {
namespace {

// out = X W^T with X (n x c) taken from a feature map and W (d x c).
Matrix project(const FeatureMap& x, const Matrix& w) {
  const std::size_t n = x.pixels();
  Matrix out(n, w.rows);
  const auto rows = static_cast<long>(n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const auto px = x.pixel(static_cast<std::size_t>(i));
    auto dst = out.row(static_cast<std::size_t>(i));
    for (std::size_t a = 0; a < w.rows; ++a) {
      const auto wr = w.row(a);
      double s = 0.0;
      for (std::size_t k = 0; k < wr.size(); ++k) s += wr[k] * px[k];
      dst[a] = s;
    }
  }
  return out;
}

void relu_inplace(Matrix& m) {
  for (double& v : m.data) v = v > 0.0 ? v : 0.0;
}

// acc(a, b) += sum_i g(i, a) * x(i, b), reduction over i in index order.
void accumulate_outer(Matrix& acc, const Matrix& g, const FeatureMap& x) {
  const auto rows = static_cast<long>(acc.rows);
#pragma omp parallel for schedule(static)
  for (long a = 0; a < rows; ++a) {
    auto dst = acc.row(static_cast<std::size_t>(a));
    for (std::size_t i = 0; i < g.rows; ++i) {
      const double gi = g(i, static_cast<std::size_t>(a));
      if (gi == 0.0) continue;
      const auto px = x.pixel(i);
      for (std::size_t b = 0; b < dst.size(); ++b) dst[b] += gi * px[b];
    }
  }
}

void check_same_grid(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw DimensionError(std::string("dfl: ") + what + " grids differ");
  }
}

void fill_uniform(Matrix& m, Rng& rng, double bound) {
  for (double& v : m.data) v = rng.uniform(-bound, bound);
}

double sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace

void DflParams::validate() const {
  if (channels == 0 || hidden == 0) throw ContractError("DflParams: c and d must be >= 1");
  auto check = [&](const char* name, const Matrix& m, std::size_t r, std::size_t c) {
    if (m.rows != r || m.cols != c || m.data.size() != r * c) {
      throw DimensionError(std::string("DflParams: ") + name + " has wrong shape");
    }
    for (double v : m.data) {
      if (!std::isfinite(v)) throw ContractError(std::string("DflParams: ") + name + " not finite");
    }
  };
  check("query_proj", query_proj, hidden, channels);
  check("ref_proj", ref_proj, hidden, channels);
  check("value_proj", value_proj, hidden, channels);
  check("fuse_proj", fuse_proj, hidden, 2 * hidden);
}

DflParams dfl_init_params(std::uint64_t seed, std::size_t channels, std::size_t hidden) {
  if (channels == 0 || hidden == 0) throw ContractError("dfl_init_params: c and d must be >= 1");
  DflParams p;
  p.channels = channels;
  p.hidden = hidden;
  p.seed = seed;
  p.query_proj = Matrix(hidden, channels);
  p.ref_proj = Matrix(hidden, channels);
  p.value_proj = Matrix(hidden, channels);
  p.fuse_proj = Matrix(hidden, 2 * hidden);
  Rng rng(seed);
  const double a = std::sqrt(6.0 / static_cast<double>(channels + hidden));
  const double a_fuse = std::sqrt(6.0 / static_cast<double>(3 * hidden));
  fill_uniform(p.query_proj, rng, a);
  fill_uniform(p.ref_proj, rng, a);
  fill_uniform(p.value_proj, rng, a);
  fill_uniform(p.fuse_proj, rng, a_fuse);
  return p;
}

DflGradients zero_gradients(const DflParams& params) {
  DflGradients g;
  g.channels = params.channels;
  g.hidden = params.hidden;
  g.seed = params.seed;
  g.query_proj = Matrix(params.query_proj.rows, params.query_proj.cols);
  g.ref_proj = Matrix(params.ref_proj.rows, params.ref_proj.cols);
  g.value_proj = Matrix(params.value_proj.rows, params.value_proj.cols);
  g.fuse_proj = Matrix(params.fuse_proj.rows, params.fuse_proj.cols);
  return g;
}

DflResult dfl_forward(const FeatureMap& query, const FeatureMap& reference, const Mask& p1_fg,
                      const DflParams& params, DflOptions opts) {
  params.validate();
  check_same_grid(query, reference, "query/reference");
  if (query.channels != params.channels) throw DimensionError("dfl: channel mismatch");
  if (p1_fg.height != query.height || p1_fg.width != query.width) {
    throw DimensionError("dfl: initial mask grid differs from query grid");
  }

  const std::size_t n = query.pixels();
  const std::size_t d = params.hidden;
  DflResult res;
  DflIntermediates& c = res.cache;
  c.height = query.height;
  c.width = query.width;
  c.apply_posterior = opts.apply_posterior;
  c.query_emb = project(query, params.query_proj);
  c.ref_emb = project(reference, params.ref_proj);
  c.ref_values = project(reference, params.value_proj);
  relu_inplace(c.ref_values);
  c.query_values = project(query, params.value_proj);
  relu_inplace(c.query_values);

  c.logits = Matrix(n, n);
  c.weights = Matrix(n, n);
  c.aggregated = Matrix(n, d);
  c.fused_pre = Matrix(n, d);
  c.fused = Matrix(n, d);
  c.output = Matrix(n, d);
  const Matrix& wc = params.fuse_proj;

  const auto rows = static_cast<long>(n);
#pragma omp parallel for schedule(static)
  for (long li = 0; li < rows; ++li) {
    const auto i = static_cast<std::size_t>(li);
    const auto q = c.query_emb.row(i);
    auto z = c.logits.row(i);
    double zmax = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      const auto r = c.ref_emb.row(j);
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += q[a] * r[a];
      z[j] = s;
      zmax = std::max(zmax, s);
    }
    auto w = c.weights.row(i);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      w[j] = std::exp(z[j] - zmax);
      denom += w[j];
    }
    for (std::size_t j = 0; j < n; ++j) w[j] /= denom;

    auto v = c.aggregated.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto rv = c.ref_values.row(j);
      for (std::size_t a = 0; a < d; ++a) v[a] += w[j] * rv[a];
    }

    const auto qv = c.query_values.row(i);
    auto pre = c.fused_pre.row(i);
    auto f = c.fused.row(i);
    auto out = c.output.row(i);
    const double gate = opts.apply_posterior ? p1_fg.data[i] : 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      const auto wr = wc.row(a);
      double s = 0.0;
      for (std::size_t b = 0; b < d; ++b) s += wr[b] * v[b];
      for (std::size_t b = 0; b < d; ++b) s += wr[d + b] * qv[b];
      pre[a] = s;
      f[a] = s > 0.0 ? s : 0.0;
      out[a] = f[a] * gate;
    }
  }

  res.output = FeatureMap(query.height, query.width, d);
  res.output.data = c.output.data;
  return res;
}

DflGradients dfl_backward(const FeatureMap& output_grad, const DflIntermediates& cache,
                          const FeatureMap& query, const FeatureMap& reference, const Mask& p1_fg,
                          const DflParams& params) {
  params.validate();
  const std::size_t n = query.pixels();
  const std::size_t d = params.hidden;
  check_same_grid(query, reference, "query/reference");
  if (cache.height != query.height || cache.width != query.width || cache.output.rows != n ||
      cache.output.cols != d || cache.logits.rows != n || cache.logits.cols != n) {
    throw ContractError("dfl_backward: cached intermediates do not match the inputs");
  }
  if (output_grad.height != query.height || output_grad.width != query.width ||
      output_grad.channels != d) {
    throw DimensionError("dfl_backward: output gradient must be h x w x d");
  }
  if (p1_fg.height != query.height || p1_fg.width != query.width) {
    throw DimensionError("dfl_backward: initial mask grid differs from query grid");
  }

  DflGradients grads = zero_gradients(params);
  const Matrix& wc = params.fuse_proj;
  const auto rows = static_cast<long>(n);

  // Through the gate and the fusion ReLU.
  Matrix g_pre(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double gate = cache.apply_posterior ? p1_fg.data[i] : 1.0;
    for (std::size_t a = 0; a < d; ++a) {
      g_pre(i, a) = cache.fused_pre(i, a) > 0.0 ? output_grad.data[i * d + a] * gate : 0.0;
    }
  }

  // Fusion transform and its inputs [v_i ; ReLU(W_v f_i)].
#pragma omp parallel for schedule(static)
  for (long la = 0; la < static_cast<long>(d); ++la) {
    const auto a = static_cast<std::size_t>(la);
    auto dst = grads.fuse_proj.row(a);
    for (std::size_t i = 0; i < n; ++i) {
      const double g = g_pre(i, a);
      if (g == 0.0) continue;
      for (std::size_t b = 0; b < d; ++b) {
        dst[b] += g * cache.aggregated(i, b);
        dst[d + b] += g * cache.query_values(i, b);
      }
    }
  }

  Matrix g_agg(n, d);
  Matrix g_qval_pre(n, d);
#pragma omp parallel for schedule(static)
  for (long li = 0; li < rows; ++li) {
    const auto i = static_cast<std::size_t>(li);
    for (std::size_t b = 0; b < d; ++b) {
      double gv = 0.0;
      double gq = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        gv += wc(a, b) * g_pre(i, a);
        gq += wc(a, d + b) * g_pre(i, a);
      }
      g_agg(i, b) = gv;
      g_qval_pre(i, b) = cache.query_values(i, b) > 0.0 ? gq : 0.0;
    }
  }

  // Aggregation v_i = sum_j w_ij rv_j, then the softmax Jacobian.
  Matrix g_logits(n, n);
#pragma omp parallel for schedule(static)
  for (long li = 0; li < rows; ++li) {
    const auto i = static_cast<std::size_t>(li);
    const auto w = cache.weights.row(i);
    auto gz = g_logits.row(i);
    double inner = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double gw = 0.0;
      for (std::size_t a = 0; a < d; ++a) gw += g_agg(i, a) * cache.ref_values(j, a);
      gz[j] = gw;
      inner += w[j] * gw;
    }
    for (std::size_t j = 0; j < n; ++j) gz[j] = w[j] * (gz[j] - inner);
  }

  Matrix g_rval_pre(n, d);
  Matrix g_ref_emb(n, d);
#pragma omp parallel for schedule(static)
  for (long lj = 0; lj < rows; ++lj) {
    const auto j = static_cast<std::size_t>(lj);
    for (std::size_t a = 0; a < d; ++a) {
      double gr = 0.0;
      double ge = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        gr += cache.weights(i, j) * g_agg(i, a);
        ge += g_logits(i, j) * cache.query_emb(i, a);
      }
      g_rval_pre(j, a) = cache.ref_values(j, a) > 0.0 ? gr : 0.0;
      g_ref_emb(j, a) = ge;
    }
  }

  Matrix g_query_emb(n, d);
#pragma omp parallel for schedule(static)
  for (long li = 0; li < rows; ++li) {
    const auto i = static_cast<std::size_t>(li);
    for (std::size_t a = 0; a < d; ++a) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g_logits(i, j) * cache.ref_emb(j, a);
      g_query_emb(i, a) = s;
    }
  }

  accumulate_outer(grads.query_proj, g_query_emb, query);
  accumulate_outer(grads.ref_proj, g_ref_emb, reference);
  accumulate_outer(grads.value_proj, g_qval_pre, query);
  accumulate_outer(grads.value_proj, g_rval_pre, reference);
  return grads;
}

std::string format_dfl_params(const DflParams& params) {
  params.validate();
  std::string out = "dfl-params v1\n";
  out += std::to_string(params.channels) + ' ' + std::to_string(params.hidden) + ' ' +
         std::to_string(params.seed) + '\n';
  for_each_matrix(params, [&](const char* name, const Matrix& m) {
    out += std::string(name) + ' ' + std::to_string(m.rows) + ' ' + std::to_string(m.cols) + '\n';
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t k = 0; k < m.cols; ++k) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), m(r, k));
        if (k) out += ' ';
        out.append(buf, ptr);
      }
      out += '\n';
    }
  });
  return out;
}

DflParams parse_dfl_params(std::string_view text) {
  std::size_t pos = 0;
  auto next = [&]() -> std::string_view {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    return text.substr(start, pos - start);
  };
  auto number = [&]<class T>(const std::string& where, T& out) {
    const std::string_view t = next();
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw FormatError(where, "expected a number, got '" + std::string(t) + "'");
    }
  };

  if (next() != "dfl-params" || next() != "v1") throw FormatError("header", "expected 'dfl-params v1'");
  DflParams p;
  number("channels", p.channels);
  number("hidden", p.hidden);
  number("seed", p.seed);
  for_each_matrix(p, [&](const char* name, Matrix& m) {
    if (next() != name) throw FormatError(name, "missing matrix header");
    number(std::string(name) + ".rows", m.rows);
    number(std::string(name) + ".cols", m.cols);
    m.data.assign(m.rows * m.cols, 0.0);
    for (std::size_t k = 0; k < m.data.size(); ++k) {
      number(std::string(name) + " value " + std::to_string(k + 1), m.data[k]);
    }
  });
  p.validate();
  return p;
}

void save_dfl_params(const DflParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, format_dfl_params(params));
}

DflParams load_dfl_params(const std::filesystem::path& path) {
  return parse_dfl_params(read_text_file(path));
}

double gradient_rel_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const FeatureMap& query, const FeatureMap& reference,
                                const Mask& p1_fg, const DflParams& params,
                                const FeatureMap& output_grad, const DflGradients& analytic,
                                DflOptions opts, double step) {
  auto loss = [&](const DflParams& p) {
    const DflResult r = dfl_forward(query, reference, p1_fg, p, opts);
    double s = 0.0;
    for (std::size_t k = 0; k < r.output.data.size(); ++k) {
      s += output_grad.data[k] * r.output.data[k];
    }
    return s;
  };

  GradCheckReport report;
  DflParams probe = params;
  // Walk params and analytic in lockstep; the visitor order is fixed.
  std::vector<std::pair<const char*, Matrix*>> mats;
  for_each_matrix(probe, [&](const char* name, Matrix& m) { mats.emplace_back(name, &m); });
  std::vector<const Matrix*> grads;
  for_each_matrix(analytic, [&](const char*, const Matrix& m) { grads.push_back(&m); });

  for (std::size_t mi = 0; mi < mats.size(); ++mi) {
    Matrix& m = *mats[mi].second;
    const Matrix& g = *grads[mi];
    if (g.rows != m.rows || g.cols != m.cols) {
      throw DimensionError("check_gradients: gradient shape differs from parameters");
    }
    GradCheckEntry worst{mats[mi].first, 0, 0, 0.0, 0.0, -1.0};
    for (std::size_t k = 0; k < m.data.size(); ++k) {
      const double saved = m.data[k];
      m.data[k] = saved + step;
      const double up = loss(probe);
      m.data[k] = saved - step;
      const double down = loss(probe);
      m.data[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double rel = gradient_rel_error(g.data[k], numeric);
      if (rel > worst.rel_error) {
        worst = {mats[mi].first, k / m.cols, k % m.cols, g.data[k], numeric, rel};
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, worst.rel_error);
    report.worst_per_matrix.push_back(worst);
  }
  return report;
}

GradCheckInstance random_gradcheck_instance(std::uint64_t seed, std::size_t height,
                                            std::size_t width, std::size_t channels,
                                            std::size_t hidden, bool zero_mask) {
  Rng rng(seed);
  GradCheckInstance g{FeatureMap(height, width, channels), FeatureMap(height, width, channels),
                      Mask(height, width), FeatureMap(height, width, hidden),
                      dfl_init_params(seed + 1, channels, hidden)};
  for (double& v : g.query.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : g.reference.data) v = rng.uniform(-1.0, 1.0);
  for (double& v : g.p1_fg.data) v = zero_mask ? 0.0 : rng.uniform();
  for (double& v : g.output_grad.data) v = rng.normal();
  return g;
}

std::vector<double> make_probe(std::uint64_t seed, std::size_t hidden) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<double> probe(hidden);
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& v : probe) v = rng.uniform(-a, a);
  return probe;
}

Posterior dfl_readout(const FeatureMap& dfl_output, std::span<const double> probe) {
  if (probe.size() != dfl_output.channels) throw DimensionError("dfl_readout: probe size mismatch");
  Posterior p(dfl_output.height, dfl_output.width);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const auto f = dfl_output.pixel(i);
    double s = 0.0;
    for (std::size_t a = 0; a < f.size(); ++a) s += probe[a] * f[a];
    p.data[i] = sigmoid(s);
  }
  return p;
}

ToyTrainReport train_dfl_toy(DflParams& params, const FeatureMap& query,
                             const FeatureMap& reference, const Mask& p1_fg, const Mask& target,
                             std::span<const double> probe, std::size_t steps,
                             double learning_rate, DflOptions opts) {
  if (target.height != query.height || target.width != query.width) {
    throw DimensionError("train_dfl_toy: target grid differs from query grid");
  }
  const std::size_t n = query.pixels();
  const std::size_t d = params.hidden;
  auto bce = [&](const Posterior& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = std::clamp(p.data[i], 1e-12, 1.0 - 1e-12);
      s -= target.data[i] * std::log(q) + (1.0 - target.data[i]) * std::log(1.0 - q);
    }
    return s / static_cast<double>(n);
  };

  ToyTrainReport rep;
  for (std::size_t step = 0; step <= steps; ++step) {
    const DflResult fwd = dfl_forward(query, reference, p1_fg, params, opts);
    const Posterior p = dfl_readout(fwd.output, probe);
    const double loss = bce(p);
    if (step == 0) rep.initial_loss = loss;
    rep.final_loss = loss;
    if (step == steps) break;

    FeatureMap g(query.height, query.width, d);
    for (std::size_t i = 0; i < n; ++i) {
      const double ds = (p.data[i] - target.data[i]) / static_cast<double>(n);
      for (std::size_t a = 0; a < d; ++a) g.data[i * d + a] = ds * probe[a];
    }
    const DflGradients grads = dfl_backward(g, fwd.cache, query, reference, p1_fg, params);
    std::vector<Matrix*> ps;
    for_each_matrix(params, [&](const char*, Matrix& m) { ps.push_back(&m); });
    std::size_t idx = 0;
    for_each_matrix(grads, [&](const char*, const Matrix& gm) {
      Matrix& pm = *ps[idx++];
      for (std::size_t k = 0; k < pm.data.size(); ++k) pm.data[k] -= learning_rate * gm.data[k];
    });
    rep.steps = step + 1;
  }
  return rep;
}

}  // namespace cme
