#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mgca/c2f.hpp"
#include "mgca/data.hpp"
#include "mgca/errors.hpp"
#include "mgca/evaluation.hpp"
#include "mgca/losses.hpp"
#include "mgca/net.hpp"
#include "mgca/rng.hpp"
#include "mgca/targets.hpp"
#include "mgca/triage.hpp"

// Joint training (one video per step, shared backward through every loss) and
// whole-video inference from raw features to the final scored instance list.

namespace mgca {

struct TrainConfig {
  int epochs = 20;
  int warmup_epochs = 5;
  double base_lr = 0.005;
  double weight_decay = 1e-4;
  double tau = 0.07;
  int n_neg = 3;
  FocalParams focal;
  std::uint64_t seed = 1;

  void validate() const {
    if (epochs < 1 || warmup_epochs < 0 || warmup_epochs >= epochs)
      throw ConfigError("train config: need 0 <= warmup_epochs < epochs");
    if (!(base_lr > 0.0)) throw ConfigError("train config: lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("train config: negative weight decay");
    if (n_neg < 1) throw ConfigError("train config: need at least one negative");
  }
};

struct NmsConfig {
  double tiou_threshold = 0.5;
  int max_instances = 200;

  void validate() const {
    if (!(tiou_threshold > 0.0 && tiou_threshold <= 1.0))
      throw ConfigError("nms config: threshold must lie in (0,1]");
    if (max_instances < 1) throw ConfigError("nms config: max instances must be >= 1");
  }
};

struct InferConfig {
  TriageConfig triage;
  NmsConfig nms;
  int n_coarse = 2;
  double tau = 0.07;
  bool use_conventional = true;  // false: every retained proposal goes open-vocabulary
  bool use_aps_gate = true;      // false: gate on the max base-class probability instead
};

class AdamW {
 public:
  explicit AdamW(ModelParams& params, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, t] : params.named()) {
      m_.emplace_back(t->rows, t->cols);
      v_.emplace_back(t->rows, t->cols);
    }
  }

  void step(ModelParams& params, double lr, double weight_decay) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    auto named = params.named();
    for (std::size_t p = 0; p < named.size(); ++p) {
      Tensor2D& w = *named[p].second;
      Tensor2D& m = m_[p];
      Tensor2D& v = v_[p];
      for (std::size_t i = 0; i < w.data.size(); ++i) {
        const double g = w.grad[i];
        if (!std::isfinite(g))
          throw DivergenceError("non-finite gradient in " + named[p].first);
        m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g;
        v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g * g;
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        w.data[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay * w.data[i]);
      }
    }
  }

  long steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor2D> m_, v_;
};

inline double lr_at(long step, long total_steps, long warmup_steps, double base_lr) {
  if (step < 0 || step >= total_steps) throw ContractError("lr_at: step out of range");
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const double denom = static_cast<double>(std::max<long>(1, total_steps - warmup_steps));
  const double prog = static_cast<double>(step - warmup_steps) / denom;
  return 0.5 * base_lr * (1.0 + std::cos(3.14159265358979323846 * prog));
}

// Training view of a corpus under a split: annotations outside the base
// vocabulary are removed (novel categories are never trained on) and their
// categories remapped to dense base-local ids; videos left without
// annotations are dropped.
inline std::vector<VideoSample> make_train_view(const std::vector<VideoSample>& videos,
                                                const SplitSpec& split) {
  std::map<int, int> to_local;
  for (std::size_t i = 0; i < split.base_ids.size(); ++i)
    to_local[split.base_ids[i]] = static_cast<int>(i);
  std::vector<VideoSample> out;
  for (const VideoSample& v : videos) {
    VideoSample copy = v;
    copy.annotations.clear();
    for (const ActionInstance& a : v.annotations) {
      auto it = to_local.find(a.category);
      if (it == to_local.end()) continue;
      ActionInstance b = a;
      b.category = it->second;
      copy.annotations.push_back(b);
    }
    if (!copy.annotations.empty()) out.push_back(std::move(copy));
  }
  return out;
}

// Text bank over the base vocabulary with locally remapped ids, for the
// contrastive loss.
inline TextBank make_base_bank(const std::vector<Tensor2D>& templates,
                               const SplitSpec& split) {
  std::vector<Tensor2D> base_templates;
  std::vector<int> local_ids;
  for (std::size_t i = 0; i < split.base_ids.size(); ++i) {
    base_templates.push_back(templates[static_cast<std::size_t>(split.base_ids[i])]);
    local_ids.push_back(static_cast<int>(i));
  }
  return fuse_templates(base_templates, local_ids);
}

inline TextBank make_bank_for(const std::vector<Tensor2D>& templates,
                              const std::vector<int>& category_ids) {
  std::vector<Tensor2D> subset;
  for (int c : category_ids) subset.push_back(templates[static_cast<std::size_t>(c)]);
  return fuse_templates(subset, category_ids);
}

struct TrainResult {
  ModelParams params;
  std::vector<LossBreakdown> epoch_means;
};

inline LossBreakdown train_one_video(const VideoSample& v, const TextBank& base_bank,
                                     ModelParams& params, AdamW& opt, const ModelConfig& mc,
                                     const TrainConfig& tc, double lr, Rng& neg_rng) {
  Graph g;
  NodeId input = g.constant(v.f_vid.feat);
  BackboneOut fpn = backbone_forward(g, input, params, mc);
  HeadsOut heads = heads_forward(g, fpn, params, mc);
  const FpnLayout layout = fpn_layout_for(mc, v.f_vid.feat.rows, 1.0 / v.f_vid.rate);

  ClsRegTargets cls_targets = assign_cls_reg_targets(v.annotations, layout, mc.n_base);
  const std::vector<Tensor2D> oo_levels =
      split_levels(g.value(heads.onset_offset), heads.level_lengths);
  const ProposalSet proposals = decode_proposals(oo_levels, layout, v.duration_sec);
  ApsTargets aps_targets = build_aps_targets(v.annotations, proposals);

  const int n_pos = cls_targets.n_pos;
  NodeId l_loc = loc_loss_node(g, heads.onset_offset, cls_targets, layout);
  NodeId l_cc = focal_loss_node(g, heads.p_base, std::move(cls_targets), tc.focal);
  NodeId l_app = app_loss_node(g, heads.p_aps, std::move(aps_targets));
  std::vector<ContrastiveBatch> batches =
      build_contrastive_batches(v.annotations, v.f_img, base_bank, tc.n_neg, neg_rng);
  NodeId l_con = contrastive_loss_node(g, params, batches, tc.tau);
  NodeId total = total_loss_node(g, l_loc, l_cc, l_app, l_con);

  LossBreakdown bd;
  try {
    bd = read_breakdown(g, l_loc, l_cc, l_app, l_con, n_pos);
    g.backward(total);
    opt.step(params, lr, tc.weight_decay);
  } catch (const DivergenceError& e) {
    throw DivergenceError("video " + v.id + ": " + e.what());
  }
  return bd;
}

inline TrainResult train_model(const std::vector<VideoSample>& train_videos,
                               const TextBank& base_bank, const ModelConfig& mc,
                               const TrainConfig& tc) {
  mc.validate();
  tc.validate();
  if (train_videos.empty()) throw ContractError("train_model: empty dataset");

  TrainResult res;
  res.params = init_params(mc);
  AdamW opt(res.params);
  const long n = static_cast<long>(train_videos.size());
  const long total_steps = static_cast<long>(tc.epochs) * n;
  const long warmup_steps = static_cast<long>(tc.warmup_epochs) * n;
  long step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    LossBreakdown mean;
    for (long i = 0; i < n; ++i, ++step) {
      Rng neg_rng(derive_seed(tc.seed, 0x6e656761ull + static_cast<std::uint64_t>(step)));
      const double lr = lr_at(step, total_steps, warmup_steps, tc.base_lr);
      const LossBreakdown bd = train_one_video(train_videos[static_cast<std::size_t>(i)],
                                               base_bank, res.params, opt, mc, tc, lr, neg_rng);
      mean.l_loc += bd.l_loc;
      mean.l_cc += bd.l_cc;
      mean.l_app += bd.l_app;
      mean.l_contrast += bd.l_contrast;
      mean.total += bd.total;
      mean.n_pos += bd.n_pos;
    }
    mean.l_loc /= n;
    mean.l_cc /= n;
    mean.l_app /= n;
    mean.l_contrast /= n;
    mean.total /= n;
    res.epoch_means.push_back(mean);
  }
  return res;
}

inline std::vector<ScoredInstance> nms_instances(std::vector<ScoredInstance> all,
                                                 const NmsConfig& cfg) {
  cfg.validate();
  auto by_rank = [](const ScoredInstance& a, const ScoredInstance& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.interval.t_s != b.interval.t_s) return a.interval.t_s < b.interval.t_s;
    if (a.interval.t_e != b.interval.t_e) return a.interval.t_e < b.interval.t_e;
    return a.category < b.category;
  };
  std::sort(all.begin(), all.end(), by_rank);
  std::vector<ScoredInstance> kept;
  for (const ScoredInstance& cand : all) {
    bool suppressed = false;
    for (const ScoredInstance& k : kept) {
      if (k.category != cand.category) continue;
      if (tiou(k.interval, cand.interval) >= cfg.tiou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  if (static_cast<int>(kept.size()) > cfg.max_instances)
    kept.resize(static_cast<std::size_t>(cfg.max_instances));
  return kept;
}

// Full inference for one video. novel_bank carries the open-vocabulary
// candidate categories (the novel set in the standard protocol); base
// detections are mapped back to vocabulary ids through the split.
inline std::vector<ScoredInstance> infer_video(const VideoSample& v, ModelParams& params,
                                               const ModelConfig& mc, const SplitSpec& split,
                                               const TextBank& novel_bank,
                                               const InferConfig& ic) {
  Graph g;
  NodeId input = g.constant(v.f_vid.feat);
  BackboneOut fpn = backbone_forward(g, input, params, mc);
  HeadsOut heads = heads_forward(g, fpn, params, mc);
  const FpnLayout layout = fpn_layout_for(mc, v.f_vid.feat.rows, 1.0 / v.f_vid.rate);

  const std::vector<Tensor2D> oo_levels =
      split_levels(g.value(heads.onset_offset), heads.level_lengths);
  const ProposalSet proposals = decode_proposals(oo_levels, layout, v.duration_sec);

  const Tensor2D& p_base = g.value(heads.p_base);
  const Tensor2D& p_aps_col = g.value(heads.p_aps);
  std::vector<double> presence(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (ic.use_aps_gate) {
      presence[i] = p_aps_col.at(static_cast<int>(i), 0);
    } else {
      double mx = 0.0;
      for (int c = 0; c < p_base.cols; ++c)
        mx = std::max(mx, p_base.at(static_cast<int>(i), c));
      presence[i] = mx;
    }
  }

  TriageConfig tri = ic.triage;
  if (!ic.use_conventional) tri.lambda_base = 2.0;  // unreachable: nothing goes base
  const TriageResult triage = triage_proposals(proposals, presence, p_base, tri, mc.n_base);

  std::vector<ScoredInstance> all;
  for (const BaseInstance& b : triage.base_instances) {
    ScoredInstance s;
    s.interval = b.interval;
    s.category = split.base_ids[static_cast<std::size_t>(b.category)];
    s.score = b.score;
    all.push_back(s);
  }

  if (!triage.novel_proposals.empty()) {
    const Tensor2D s_img = image_text_similarity(v.f_img.feat, novel_bank);
    const CoarseResult coarse = mil_coarse_categories(s_img, novel_bank, ic.n_coarse);
    std::vector<Interval> spans;
    std::vector<double> aps;
    for (const NovelProposal& np : triage.novel_proposals) {
      spans.push_back(np.interval);
      aps.push_back(np.aps);
    }
    const Tensor2D f_np = pool_span_features(v.f_img, spans);
    for (const NovelInstance& ni :
         assign_fine_categories(f_np, spans, aps, novel_bank, coarse, params, ic.tau)) {
      ScoredInstance s;
      s.interval = ni.interval;
      s.category = ni.category;
      s.score = ni.score;
      all.push_back(s);
    }
  }

  return nms_instances(std::move(all), ic.nms);
}

}  // namespace mgca
