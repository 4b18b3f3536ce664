#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mgca/c2f.hpp"
#include "mgca/data.hpp"
#include "mgca/errors.hpp"
#include "mgca/interval.hpp"
#include "mgca/net.hpp"
#include "mgca/rng.hpp"
#include "mgca/targets.hpp"
#include "mgca/tensor.hpp"

// Training losses, each added to the computation graph as a custom node with
// a hand-derived backward so one backward pass trains every module jointly.

namespace mgca {

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
};

namespace detail {
inline double clamp_prob(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }
}

// Binary focal terms over every (position, class) cell: the target class of a
// positive position counts as label 1, every other cell as label 0. The sum
// is normalized by the positive-position count.
inline NodeId focal_loss_node(Graph& g, NodeId p_base, ClsRegTargets targets,
                              FocalParams fp = {}) {
  const double norm = 1.0 / std::max(1, targets.n_pos);
  CustomOp op;
  op.name = "focal_loss";
  op.forward = [targets, fp, norm](const std::vector<const Tensor2D*>& in) {
    const Tensor2D& p = *in[0];
    if (static_cast<std::size_t>(p.rows) != targets.class_id.size())
      throw DimensionError("focal_loss: row count != target count");
    double loss = 0.0;
    for (int i = 0; i < p.rows; ++i)
      for (int c = 0; c < p.cols; ++c) {
        const double pv = detail::clamp_prob(p.at(i, c));
        if (targets.class_id[static_cast<std::size_t>(i)] == c)
          loss += -fp.alpha * std::pow(1.0 - pv, fp.gamma) * std::log(pv);
        else
          loss += -(1.0 - fp.alpha) * std::pow(pv, fp.gamma) * std::log(1.0 - pv);
      }
    Tensor2D out(1, 1);
    out.data[0] = loss * norm;
    return out;
  };
  op.backward = [targets, fp, norm](const std::vector<const Tensor2D*>& in, const Tensor2D&,
                                    const Tensor2D& og, const std::vector<Tensor2D*>& gi) {
    const Tensor2D& p = *in[0];
    const double scale = og.data[0] * norm;
    for (int i = 0; i < p.rows; ++i)
      for (int c = 0; c < p.cols; ++c) {
        const double pv = detail::clamp_prob(p.at(i, c));
        double d;
        if (targets.class_id[static_cast<std::size_t>(i)] == c) {
          d = fp.alpha * (fp.gamma * std::pow(1.0 - pv, fp.gamma - 1.0) * std::log(pv) -
                          std::pow(1.0 - pv, fp.gamma) / pv);
        } else {
          d = (1.0 - fp.alpha) * (-fp.gamma * std::pow(pv, fp.gamma - 1.0) * std::log(1.0 - pv) +
                                  std::pow(pv, fp.gamma) / (1.0 - pv));
        }
        gi[0]->at(i, c) += scale * d;
      }
  };
  return g.custom({p_base}, std::move(op));
}

// Mean DIoU loss over positive positions, evaluated in level-normalized
// coordinates: position time and both intervals are divided by the position's
// stride * snippet length, so all levels contribute at comparable scale.
inline NodeId loc_loss_node(Graph& g, NodeId onset_offset, ClsRegTargets targets,
                            const FpnLayout& layout) {
  std::vector<double> t_norm(targets.class_id.size());
  {
    std::size_t i = 0;
    for (std::size_t l = 0; l < layout.lengths.size(); ++l) {
      const double u = layout.unit(static_cast<int>(l));
      for (int j = 0; j < layout.lengths[l]; ++j, ++i)
        t_norm[i] = layout.position_time(static_cast<int>(l), j) / u;
    }
    if (i != t_norm.size()) throw DimensionError("loc_loss: layout does not match targets");
  }
  const double norm = 1.0 / std::max(1, targets.n_pos);

  CustomOp op;
  op.name = "loc_loss";
  op.forward = [targets, t_norm, norm](const std::vector<const Tensor2D*>& in) {
    const Tensor2D& oo = *in[0];
    if (oo.cols != 2 || static_cast<std::size_t>(oo.rows) != targets.class_id.size())
      throw DimensionError("loc_loss: onset/offset must be T x 2 aligned with targets");
    double loss = 0.0;
    for (int i = 0; i < oo.rows; ++i) {
      if (targets.class_id[static_cast<std::size_t>(i)] < 0) continue;
      const double t = t_norm[static_cast<std::size_t>(i)];
      const DiouResult r =
          diou_raw(t - oo.at(i, 0), t + oo.at(i, 1),
                   t - targets.d_on[static_cast<std::size_t>(i)],
                   t + targets.d_off[static_cast<std::size_t>(i)]);
      loss += r.loss;
    }
    Tensor2D out(1, 1);
    out.data[0] = loss * norm;
    return out;
  };
  op.backward = [targets, t_norm, norm](const std::vector<const Tensor2D*>& in, const Tensor2D&,
                                        const Tensor2D& og, const std::vector<Tensor2D*>& gi) {
    const Tensor2D& oo = *in[0];
    const double scale = og.data[0] * norm;
    for (int i = 0; i < oo.rows; ++i) {
      if (targets.class_id[static_cast<std::size_t>(i)] < 0) continue;
      const double t = t_norm[static_cast<std::size_t>(i)];
      const DiouResult r =
          diou_raw(t - oo.at(i, 0), t + oo.at(i, 1),
                   t - targets.d_on[static_cast<std::size_t>(i)],
                   t + targets.d_off[static_cast<std::size_t>(i)]);
      gi[0]->at(i, 0) += scale * -r.d_ts;  // pred start moves opposite to d_on
      gi[0]->at(i, 1) += scale * r.d_te;
    }
  };
  return g.custom({onset_offset}, std::move(op));
}

// Mean absolute error between the predicted presence score and its tIoU
// target, restricted to positions inside annotated intervals.
inline NodeId app_loss_node(Graph& g, NodeId p_aps, ApsTargets targets) {
  int n_pos = 0;
  for (int v : targets.p_loc) n_pos += v;
  const double norm = n_pos > 0 ? 1.0 / n_pos : 0.0;

  CustomOp op;
  op.name = "app_loss";
  op.forward = [targets, norm](const std::vector<const Tensor2D*>& in) {
    const Tensor2D& p = *in[0];
    if (p.cols != 1 || static_cast<std::size_t>(p.rows) != targets.p_loc.size())
      throw DimensionError("app_loss: predictions must be T x 1 aligned with targets");
    double loss = 0.0;
    for (int i = 0; i < p.rows; ++i)
      if (targets.p_loc[static_cast<std::size_t>(i)])
        loss += std::fabs(p.at(i, 0) - targets.p_aps_hat[static_cast<std::size_t>(i)]);
    Tensor2D out(1, 1);
    out.data[0] = loss * norm;
    return out;
  };
  op.backward = [targets, norm](const std::vector<const Tensor2D*>& in, const Tensor2D&,
                                const Tensor2D& og, const std::vector<Tensor2D*>& gi) {
    const Tensor2D& p = *in[0];
    const double scale = og.data[0] * norm;
    for (int i = 0; i < p.rows; ++i) {
      if (!targets.p_loc[static_cast<std::size_t>(i)]) continue;
      const double diff = p.at(i, 0) - targets.p_aps_hat[static_cast<std::size_t>(i)];
      if (diff > 0.0)
        gi[0]->at(i, 0) += scale;
      else if (diff < 0.0)
        gi[0]->at(i, 0) -= scale;
    }
  };
  return g.custom({p_aps}, std::move(op));
}

inline double cross_entropy_row(const std::vector<double>& logits, int label) {
  if (logits.empty() || label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw ContractError("cross_entropy_row: bad label");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return -(logits[static_cast<std::size_t>(label)] - mx - std::log(z));
}

// Uniform sample of n_neg distinct categories from [0, n_categories) minus
// the positive.
inline std::vector<int> sample_negatives(int n_categories, int positive, int n_neg, Rng& rng) {
  if (n_categories - 1 < n_neg)
    throw ContractError("sample_negatives: not enough categories for the requested negatives");
  std::vector<int> pool;
  pool.reserve(static_cast<std::size_t>(n_categories) - 1);
  for (int c = 0; c < n_categories; ++c)
    if (c != positive) pool.push_back(c);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n_neg));
  for (int i = 0; i < n_neg; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    out.push_back(pool[static_cast<std::size_t>(i)]);
  }
  return out;
}

struct ContrastiveBatch {
  Tensor2D f_np;        // 1 x d pooled span feature
  Tensor2D f_contrast;  // (1 + n_neg) x d text rows, positive first
  int positive_category = 0;
  std::vector<int> negative_categories;
};

// One anchor per annotated instance: the span's pooled image feature against
// its category's fused text row plus sampled in-vocabulary negatives.
inline std::vector<ContrastiveBatch> build_contrastive_batches(
    const AnnotationSet& annotations, const FeatureMatrix& f_img, const TextBank& bank,
    int n_neg, Rng& rng) {
  std::vector<ContrastiveBatch> out;
  out.reserve(annotations.size());
  const int d = bank.fused.cols;
  for (const ActionInstance& a : annotations) {
    if (a.category < 0 || a.category >= bank.rows())
      throw VocabError("build_contrastive_batches: category outside text bank");
    ContrastiveBatch b;
    b.positive_category = a.category;
    b.negative_categories = sample_negatives(bank.rows(), a.category, n_neg, rng);
    b.f_np = pool_span_features(f_img, {a.interval()});
    b.f_contrast = Tensor2D(1 + n_neg, d);
    for (int j = 0; j < d; ++j) b.f_contrast.at(0, j) = bank.fused.at(a.category, j);
    for (int k = 0; k < n_neg; ++k)
      for (int j = 0; j < d; ++j)
        b.f_contrast.at(1 + k, j) =
            bank.fused.at(b.negative_categories[static_cast<std::size_t>(k)], j);
    out.push_back(std::move(b));
  }
  return out;
}

// Cross-entropy over temperature-scaled similarities, the true text row
// always at index 0, averaged over anchors. Anchor features run through the
// projection layer inside the supplied graph so its parameters receive
// gradients from the same backward pass as the heads.
inline NodeId contrastive_loss_node(Graph& g, ModelParams& params,
                                    const std::vector<ContrastiveBatch>& batches,
                                    double tau) {
  if (!(tau > 0.0)) throw ContractError("contrastive_loss: temperature must be positive");
  if (batches.empty()) {
    Tensor2D zero(1, 1);
    return g.constant(zero);
  }
  const int k = batches[0].f_contrast.rows;
  const int d = batches[0].f_contrast.cols;
  const int n = static_cast<int>(batches.size());

  Tensor2D anchors(n, d);
  Tensor2D text(n * k, d);
  for (int a = 0; a < n; ++a) {
    const ContrastiveBatch& b = batches[static_cast<std::size_t>(a)];
    if (b.f_contrast.rows != k || b.f_contrast.cols != d || b.f_np.cols != d)
      throw DimensionError("contrastive_loss: inconsistent batch shapes");
    for (int j = 0; j < d; ++j) anchors.at(a, j) = b.f_np.at(0, j);
    for (int r = 0; r < k; ++r)
      for (int j = 0; j < d; ++j) text.at(a * k + r, j) = b.f_contrast.at(r, j);
  }

  NodeId proj = proj_forward(g, g.constant(std::move(anchors)), params);
  NodeId text_node = g.constant(std::move(text));

  CustomOp op;
  op.name = "contrastive_ce";
  op.forward = [k, tau](const std::vector<const Tensor2D*>& in) {
    const Tensor2D& z = *in[0];
    const Tensor2D& t = *in[1];
    if (t.rows != z.rows * k || t.cols != z.cols)
      throw DimensionError("contrastive_ce: text block shape mismatch");
    double loss = 0.0;
    std::vector<double> logits(static_cast<std::size_t>(k));
    for (int a = 0; a < z.rows; ++a) {
      for (int r = 0; r < k; ++r) {
        double dot = 0.0;
        for (int j = 0; j < z.cols; ++j) dot += z.at(a, j) * t.at(a * k + r, j);
        logits[static_cast<std::size_t>(r)] = dot / tau;
      }
      loss += cross_entropy_row(logits, 0);
    }
    Tensor2D out(1, 1);
    out.data[0] = loss / z.rows;
    return out;
  };
  op.backward = [k, tau](const std::vector<const Tensor2D*>& in, const Tensor2D&,
                         const Tensor2D& og, const std::vector<Tensor2D*>& gi) {
    const Tensor2D& z = *in[0];
    const Tensor2D& t = *in[1];
    const double scale = og.data[0] / z.rows;
    std::vector<double> logits(static_cast<std::size_t>(k));
    for (int a = 0; a < z.rows; ++a) {
      double mx = -1e300;
      for (int r = 0; r < k; ++r) {
        double dot = 0.0;
        for (int j = 0; j < z.cols; ++j) dot += z.at(a, j) * t.at(a * k + r, j);
        logits[static_cast<std::size_t>(r)] = dot / tau;
        mx = std::max(mx, logits[static_cast<std::size_t>(r)]);
      }
      double zsum = 0.0;
      for (int r = 0; r < k; ++r) zsum += std::exp(logits[static_cast<std::size_t>(r)] - mx);
      for (int r = 0; r < k; ++r) {
        const double sm = std::exp(logits[static_cast<std::size_t>(r)] - mx) / zsum;
        const double dlogit = scale * (sm - (r == 0 ? 1.0 : 0.0)) / tau;
        for (int j = 0; j < z.cols; ++j) gi[0]->at(a, j) += dlogit * t.at(a * k + r, j);
      }
    }
  };
  return g.custom({proj, text_node}, std::move(op));
}

struct LossBreakdown {
  double l_loc = 0.0;
  double l_cc = 0.0;
  double l_app = 0.0;
  double l_contrast = 0.0;
  double total = 0.0;
  int n_pos = 0;
};

inline NodeId total_loss_node(Graph& g, NodeId l_loc, NodeId l_cc, NodeId l_app,
                              NodeId l_contrast) {
  return g.add(g.add(g.add(l_loc, l_cc), l_app), l_contrast);
}

inline LossBreakdown read_breakdown(const Graph& g, NodeId l_loc, NodeId l_cc, NodeId l_app,
                                    NodeId l_contrast, int n_pos) {
  LossBreakdown b;
  b.l_loc = g.scalar(l_loc);
  b.l_cc = g.scalar(l_cc);
  b.l_app = g.scalar(l_app);
  b.l_contrast = g.scalar(l_contrast);
  b.total = ((b.l_loc + b.l_cc) + b.l_app) + b.l_contrast;
  b.n_pos = n_pos;
  if (!std::isfinite(b.total))
    throw DivergenceError("loss is not finite (loc=" + std::to_string(b.l_loc) +
                          " cc=" + std::to_string(b.l_cc) + " app=" + std::to_string(b.l_app) +
                          " contrast=" + std::to_string(b.l_contrast) + ")");
  return b;
}

}  // namespace mgca
