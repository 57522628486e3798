#include "naive.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "cme/errors.hpp"

namespace cme::oracle {
namespace {

double dot(const std::vector<double>& a, const double* b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

bool all_zero(const double* v, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    if (v[k] != 0.0) return false;
  }
  return true;
}

}  // namespace

FeatureMap naive_normalize(const FeatureMap& fm) {
  FeatureMap out = fm;
  for (std::size_t i = 0; i < fm.height * fm.width; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < fm.channels; ++k) {
      const double v = fm.data[i * fm.channels + k];
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    for (std::size_t k = 0; k < fm.channels; ++k) {
      double& v = out.data[i * fm.channels + k];
      v = norm < 1e-12 ? 0.0 : v / norm;
    }
  }
  return out;
}

Grid naive_affinity(const FeatureMap& query, const MemoryBank& bank) {
  if (bank.size() == 0) throw ContractError("naive_affinity: empty bank");
  if (query.channels != bank.channels()) throw ContractError("naive_affinity: channels");
  Grid a{query.height * query.width, bank.size(), {}};
  a.data.assign(a.rows * a.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < query.channels; ++k) {
        s += query.data[i * query.channels + k] * bank.keys()[j * bank.channels() + k];
      }
      a.data[i * a.cols + j] = s;
    }
  }
  return a;
}

Retrieved naive_retrieve(const Grid& affinity, const MemoryBank& bank) {
  Retrieved r{affinity, affinity};
  for (std::size_t i = 0; i < affinity.rows; ++i) {
    for (std::size_t j = 0; j < affinity.cols; ++j) {
      r.fg.data[i * affinity.cols + j] = affinity.at(i, j) * bank.fg(j);
      r.bg.data[i * affinity.cols + j] = affinity.at(i, j) * bank.bg(j);
    }
  }
  return r;
}

double naive_topk(std::vector<double> v, std::size_t k) {
  if (v.empty()) throw ContractError("naive_topk: empty vector");
  if (k == 0) throw ContractError("naive_topk: K must be >= 1");
  std::sort(v.begin(), v.end(), std::greater<>{});
  const std::size_t m = std::min(k, v.size());
  double s = 0.0;
  for (std::size_t t = 0; t < m; ++t) s += v[t];
  return s / static_cast<double>(m);
}

NaiveScores naive_similarity(const FeatureMap& query, const MemoryBank& bank, std::size_t k) {
  const Grid a = naive_affinity(query, bank);
  const Retrieved r = naive_retrieve(a, bank);
  NaiveScores s;
  for (std::size_t i = 0; i < a.rows; ++i) {
    std::vector<double> fg(r.fg.data.begin() + static_cast<long>(i * a.cols),
                           r.fg.data.begin() + static_cast<long>((i + 1) * a.cols));
    std::vector<double> bg(r.bg.data.begin() + static_cast<long>(i * a.cols),
                           r.bg.data.begin() + static_cast<long>((i + 1) * a.cols));
    s.fg.push_back(naive_topk(fg, k));
    s.bg.push_back(naive_topk(bg, k));
  }
  return s;
}

NaiveArgmax naive_argmax(const Grid& affinity) {
  NaiveArgmax m;
  for (std::size_t i = 0; i < affinity.rows; ++i) {
    double best = -INFINITY;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < affinity.cols; ++j) {
      if (affinity.at(i, j) > best) {
        best = affinity.at(i, j);
        arg = j;
      }
    }
    m.value.push_back(best);
    m.index.push_back(arg);
  }
  return m;
}

TraceResult naive_cme_trace(const std::vector<TraceFrame>& frames, const CmeConfig& cfg) {
  if (frames.empty()) throw ContractError("naive_cme_trace: no frames");
  const std::size_t c = frames.front().features.channels;
  std::vector<MemoryEntry> mem;
  std::size_t initial = 0;

  {
    const FeatureMap f = naive_normalize(frames.front().features);
    for (std::size_t i = 0; i < f.height * f.width; ++i) {
      const double* px = f.data.data() + i * c;
      if (all_zero(px, c)) continue;
      const double fg = frames.front().fg.data[i];
      mem.push_back({std::vector<double>(px, px + c), fg, 1.0 - fg});
    }
    if (mem.empty()) throw ContractError("naive_cme_trace: empty initial memory");
    initial = mem.size();
  }

  TraceResult out;
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const FeatureMap f = naive_normalize(frames[t].features);
    const std::size_t pixels = f.height * f.width;
    TraceReport rep;
    rep.size_before = mem.size();

    if (cfg.strategy == Strategy::InitialOnly) {
      rep.discarded = pixels;
    } else if (cfg.strategy == Strategy::AllFrames) {
      for (std::size_t i = 0; i < pixels; ++i) {
        const double* px = f.data.data() + i * c;
        if (all_zero(px, c)) {
          ++rep.discarded;
          continue;
        }
        const double fg = frames[t].fg.data[i];
        mem.push_back({std::vector<double>(px, px + c), fg, 1.0 - fg});
        ++rep.expanded;
      }
      if (cfg.all_frames_cap && mem.size() - initial > *cfg.all_frames_cap) {
        rep.evicted = mem.size() - initial - *cfg.all_frames_cap;
        mem.erase(mem.begin() + static_cast<long>(initial),
                  mem.begin() + static_cast<long>(initial + rep.evicted));
      }
    } else {
      // Max correlation against the memory as it stood before this frame.
      std::vector<double> re(pixels);
      std::vector<std::size_t> arg(pixels);
      for (std::size_t i = 0; i < pixels; ++i) {
        const double* px = f.data.data() + i * c;
        re[i] = -INFINITY;
        for (std::size_t j = 0; j < mem.size(); ++j) {
          const double s = dot(mem[j].key, px);
          if (s > re[i]) {
            re[i] = s;
            arg[i] = j;
          }
        }
      }
      double total = 0.0;
      for (double v : re) total += v;
      rep.avg_threshold = (total / static_cast<double>(pixels)) / (2.0 * std::exp(1.0));

      std::vector<MemoryEntry> fresh;
      for (std::size_t i = 0; i < pixels; ++i) {
        const double* px = f.data.data() + i * c;
        const double fg = frames[t].fg.data[i];
        const double bg = 1.0 - fg;
        if (re[i] >= cfg.zeta) {
          MemoryEntry& e = mem[arg[i]];
          double sq = 0.0;
          for (std::size_t k = 0; k < c; ++k) {
            e.key[k] = cfg.beta * px[k] + (1.0 - cfg.beta) * e.key[k];
            sq += e.key[k] * e.key[k];
          }
          for (std::size_t k = 0; k < c; ++k) e.key[k] /= std::sqrt(sq);
          e.fg = std::min(1.0, std::max(0.0, cfg.beta * fg + (1.0 - cfg.beta) * e.fg));
          e.bg = std::min(1.0, std::max(0.0, cfg.beta * bg + (1.0 - cfg.beta) * e.bg));
          ++rep.merged;
        } else if (re[i] >= rep.avg_threshold && !all_zero(px, c)) {
          fresh.push_back({std::vector<double>(px, px + c), fg, bg});
          ++rep.expanded;
        } else {
          ++rep.discarded;
        }
      }
      mem.insert(mem.end(), fresh.begin(), fresh.end());
    }
    rep.size_after = mem.size();
    out.reports.push_back(rep);
  }
  out.final_entries = std::move(mem);
  return out;
}

FeatureMap naive_dfl_forward(const FeatureMap& query, const FeatureMap& reference,
                             const Mask& p1_fg, const NaiveDflWeights& w, bool apply_posterior) {
  const std::size_t n = query.height * query.width;
  const std::size_t c = w.channels;
  const std::size_t d = w.hidden;
  if (reference.height * reference.width != n || query.channels != c || reference.channels != c) {
    throw ContractError("naive_dfl_forward: shape mismatch");
  }
  auto lin = [&](const std::vector<double>& m, const FeatureMap& x, std::size_t pix,
                 std::size_t row) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += m[row * c + k] * x.data[pix * c + k];
    return s;
  };
  auto relu = [](double v) { return v > 0.0 ? v : 0.0; };

  FeatureMap out(query.height, query.width, d);
  for (std::size_t i = 0; i < n; ++i) {
    // z_ij and its softmax over j.
    std::vector<double> z(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        s += lin(w.query_proj, query, i, a) * lin(w.ref_proj, reference, j, a);
      }
      z[j] = s;
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) denom += std::exp(z[j] - zmax);

    std::vector<double> cat(2 * d, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double dij = std::exp(z[j] - zmax) / denom;
      for (std::size_t a = 0; a < d; ++a) cat[a] += dij * relu(lin(w.value_proj, reference, j, a));
    }
    for (std::size_t a = 0; a < d; ++a) cat[d + a] = relu(lin(w.value_proj, query, i, a));

    for (std::size_t a = 0; a < d; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < 2 * d; ++b) s += w.fuse_proj[a * 2 * d + b] * cat[b];
      const double gate = apply_posterior ? p1_fg.data[i] : 1.0;
      out.data[i * d + a] = relu(s) * gate;
    }
  }
  return out;
}

}  // namespace cme::oracle
