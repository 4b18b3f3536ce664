#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mgca/data.hpp"
#include "mgca/errors.hpp"
#include "mgca/interval.hpp"
#include "mgca/net.hpp"
#include "mgca/tensor.hpp"

// Coarse-to-fine open-vocabulary classification: fused text embeddings,
// image-text similarity, top-k multiple-instance pooling to pick video-level
// candidate categories, span pooling of image features, and the final
// per-proposal assignment through the projection layer. Everything up to the
// fine stage reads no model parameters.

namespace mgca {

struct TextBank {
  std::vector<int> category_ids;  // vocabulary ids, one per fused row
  Tensor2D fused;                 // |C| x d_text, unit rows

  int rows() const { return fused.rows; }
};

// templates[c] holds that category's template embeddings as an M_c x d matrix;
// the fused row is their mean, re-normalized to unit length.
inline TextBank fuse_templates(const std::vector<Tensor2D>& templates,
                               const std::vector<int>& category_ids) {
  if (templates.empty()) throw ConfigError("fuse_templates: no categories");
  if (templates.size() != category_ids.size())
    throw DimensionError("fuse_templates: ids/templates size mismatch");
  const int d = templates[0].cols;
  TextBank bank;
  bank.category_ids = category_ids;
  bank.fused = Tensor2D(static_cast<int>(templates.size()), d);
  for (std::size_t c = 0; c < templates.size(); ++c) {
    const Tensor2D& t = templates[c];
    if (t.rows < 1) throw ConfigError("fuse_templates: category with zero templates");
    if (t.cols != d) throw DimensionError("fuse_templates: template dim mismatch");
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
    for (int m = 0; m < t.rows; ++m)
      for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += t.at(m, j);
    double ss = 0.0;
    for (double& v : mean) {
      v /= t.rows;
      ss += v * v;
    }
    const double norm = std::sqrt(ss) + 1e-12;
    for (int j = 0; j < d; ++j) bank.fused.at(static_cast<int>(c), j) = mean[static_cast<std::size_t>(j)] / norm;
  }
  return bank;
}

// Rows of f_img are expected unit-norm already (enforced at ingestion), so
// these dot products are cosine similarities.
inline Tensor2D image_text_similarity(const Tensor2D& f_img, const TextBank& bank) {
  if (f_img.cols != bank.fused.cols)
    throw DimensionError("image_text_similarity: feature dim mismatch");
  Tensor2D s(f_img.rows, bank.rows());
  for (int i = 0; i < f_img.rows; ++i)
    for (int c = 0; c < bank.rows(); ++c) {
      double dot = 0.0;
      for (int j = 0; j < f_img.cols; ++j) dot += f_img.at(i, j) * bank.fused.at(c, j);
      s.at(i, c) = dot;
    }
  return s;
}

struct CoarseResult {
  std::vector<double> s_mil;    // per bank row
  std::vector<int> coarse_ids;  // bank row indices, best first
  Tensor2D f_coarse;            // gathered fused rows
};

inline int mil_pool_size(int t_img) { return std::max(1, t_img / 8); }

inline CoarseResult mil_coarse_categories(const Tensor2D& s_img, const TextBank& bank,
                                          int n_coarse) {
  if (s_img.rows < 1) throw ContractError("mil_coarse_categories: empty similarity matrix");
  if (s_img.cols != bank.rows())
    throw DimensionError("mil_coarse_categories: column count != bank size");
  if (n_coarse < 1) throw ContractError("mil_coarse_categories: n_coarse must be >= 1");

  const int h = mil_pool_size(s_img.rows);
  CoarseResult r;
  r.s_mil.resize(static_cast<std::size_t>(s_img.cols));
  std::vector<double> col(static_cast<std::size_t>(s_img.rows));
  for (int c = 0; c < s_img.cols; ++c) {
    for (int i = 0; i < s_img.rows; ++i) col[static_cast<std::size_t>(i)] = s_img.at(i, c);
    std::partial_sort(col.begin(), col.begin() + h, col.end(), std::greater<double>());
    double sum = 0.0;
    for (int i = 0; i < h; ++i) sum += col[static_cast<std::size_t>(i)];
    r.s_mil[static_cast<std::size_t>(c)] = sum / h;
  }

  std::vector<int> order(r.s_mil.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return r.s_mil[static_cast<std::size_t>(a)] > r.s_mil[static_cast<std::size_t>(b)];
  });
  const int keep = std::min<int>(n_coarse, s_img.cols);
  r.coarse_ids.assign(order.begin(), order.begin() + keep);

  r.f_coarse = Tensor2D(keep, bank.fused.cols);
  for (int k = 0; k < keep; ++k)
    for (int j = 0; j < bank.fused.cols; ++j)
      r.f_coarse.at(k, j) = bank.fused.at(r.coarse_ids[static_cast<std::size_t>(k)], j);
  return r;
}

// Mean of the image-feature rows covered by each span. A span that rounds to
// an empty row range falls back to the row nearest its center, so the output
// always has one row per input span.
inline Tensor2D pool_span_features(const FeatureMatrix& f_img,
                                   const std::vector<Interval>& spans) {
  const int t_img = f_img.feat.rows;
  const int d = f_img.feat.cols;
  if (t_img < 1) throw ContractError("pool_span_features: empty image features");
  Tensor2D out(static_cast<int>(spans.size()), d);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    int lo = static_cast<int>(std::floor(spans[i].t_s * f_img.rate));
    int hi = static_cast<int>(std::ceil(spans[i].t_e * f_img.rate));
    lo = std::max(lo, 0);
    hi = std::min(hi, t_img);
    if (lo >= hi) {
      const double center = 0.5 * (spans[i].t_s + spans[i].t_e) * f_img.rate;
      lo = std::clamp(static_cast<int>(std::floor(center)), 0, t_img - 1);
      hi = lo + 1;
    }
    for (int r = lo; r < hi; ++r)
      for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) += f_img.feat.at(r, j);
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) /= (hi - lo);
  }
  return out;
}

struct NovelInstance {
  Interval interval;
  int category = 0;  // vocabulary id
  double score = 0.0;
};

inline std::vector<double> softmax_scaled(const std::vector<double>& v, double tau) {
  if (!(tau > 0.0)) throw ContractError("softmax: temperature must be positive");
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  std::vector<double> e(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    e[i] = std::exp((v[i] - mx) / tau);
    z += e[i];
  }
  for (double& x : e) x /= z;
  return e;
}

// Fine stage: project pooled span features, score them against the coarse
// text rows, and emit one categorized instance per span. The instance score
// blends the span's presence score with the softmax weight of the winning
// category.
inline std::vector<NovelInstance> assign_fine_categories(
    const Tensor2D& f_np, const std::vector<Interval>& spans,
    const std::vector<double>& aps, const TextBank& bank, const CoarseResult& coarse,
    ModelParams& params, double tau) {
  if (f_np.rows == 0) return {};
  if (static_cast<std::size_t>(f_np.rows) != spans.size() || spans.size() != aps.size())
    throw DimensionError("assign_fine_categories: span/feature/score count mismatch");
  if (coarse.coarse_ids.empty())
    throw ContractError("assign_fine_categories: empty coarse set with proposals present");

  Graph g;
  NodeId proj = proj_forward(g, g.constant(f_np), params);
  const Tensor2D& z = g.value(proj);

  std::vector<NovelInstance> out;
  out.reserve(spans.size());
  const int k = coarse.f_coarse.rows;
  std::vector<double> row(static_cast<std::size_t>(k));
  for (int i = 0; i < z.rows; ++i) {
    for (int c = 0; c < k; ++c) {
      double dot = 0.0;
      for (int j = 0; j < z.cols; ++j) dot += z.at(i, j) * coarse.f_coarse.at(c, j);
      row[static_cast<std::size_t>(c)] = dot;
    }
    int arg = 0;
    for (int c = 1; c < k; ++c)
      if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(arg)]) arg = c;
    const std::vector<double> sm = softmax_scaled(row, tau);
    NovelInstance inst;
    inst.interval = spans[static_cast<std::size_t>(i)];
    inst.category = bank.category_ids[static_cast<std::size_t>(
        coarse.coarse_ids[static_cast<std::size_t>(arg)])];
    inst.score = aps[static_cast<std::size_t>(i)] * sm[static_cast<std::size_t>(arg)];
    out.push_back(inst);
  }
  return out;
}

}  // namespace mgca
