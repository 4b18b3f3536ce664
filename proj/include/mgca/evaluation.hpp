#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "mgca/data.hpp"
#include "mgca/errors.hpp"
#include "mgca/interval.hpp"
#include "mgca/rng.hpp"

// Detection metrics: per-class average precision at each tIoU threshold with
// greedy best-overlap matching, aggregated into base / novel / overall means,
// plus seeded base-novel vocabulary splits.

namespace mgca {

struct EvalConfig {
  std::vector<double> thresholds;

  void validate() const {
    if (thresholds.empty()) throw ConfigError("eval config: no thresholds");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (!(thresholds[i] > 0.0 && thresholds[i] <= 1.0))
        throw ConfigError("eval config: thresholds must lie in (0,1]");
      if (i > 0 && thresholds[i] <= thresholds[i - 1])
        throw ConfigError("eval config: thresholds must be strictly increasing");
    }
  }
};

inline EvalConfig thumos_grid() {
  EvalConfig c;
  for (int i = 0; i <= 4; ++i) c.thresholds.push_back((3 + i) / 10.0);
  return c;
}

inline EvalConfig anet_grid() {
  EvalConfig c;
  for (int i = 0; i <= 9; ++i) c.thresholds.push_back((10 + i) / 20.0);
  return c;
}

struct SplitSpec {
  std::uint64_t seed = 0;
  double base_fraction = 0.75;
  std::vector<int> base_ids;
  std::vector<int> novel_ids;
};

// Seed s always yields the same split for a given vocabulary size, however
// many seeds are requested.
inline std::vector<SplitSpec> make_splits(int n_categories, double base_fraction,
                                          int n_seeds) {
  if (n_categories < 2) throw ConfigError("make_splits: need at least 2 categories");
  if (n_seeds < 1) throw ConfigError("make_splits: need at least 1 seed");
  const int n_base = static_cast<int>(std::llround(base_fraction * n_categories));
  if (n_base < 1 || n_base >= n_categories)
    throw ConfigError("make_splits: fraction leaves an empty base or novel set");

  std::vector<SplitSpec> out;
  for (int s = 0; s < n_seeds; ++s) {
    std::vector<int> ids(static_cast<std::size_t>(n_categories));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(derive_seed(0x73706c6974ull, static_cast<std::uint64_t>(s)));
    rng.shuffle(ids);
    SplitSpec spec;
    spec.seed = static_cast<std::uint64_t>(s);
    spec.base_fraction = base_fraction;
    spec.base_ids.assign(ids.begin(), ids.begin() + n_base);
    spec.novel_ids.assign(ids.begin() + n_base, ids.end());
    std::sort(spec.base_ids.begin(), spec.base_ids.end());
    std::sort(spec.novel_ids.begin(), spec.novel_ids.end());
    out.push_back(std::move(spec));
  }
  return out;
}

struct ScoredInstance {
  Interval interval;
  int category = 0;  // vocabulary id
  double score = 0.0;
};

struct ApPred {
  int video = 0;
  Interval interval;
  double score = 0.0;
};

struct ApGt {
  int video = 0;
  Interval interval;
};

// Single-class AP: rank by score, greedily match each prediction to the
// still-unmatched ground truth of highest tIoU in its own video, accept at
// the threshold, integrate the precision envelope over recall.
inline double average_precision(std::vector<ApPred> preds, const std::vector<ApGt>& gts,
                                double thr) {
  if (gts.empty()) return 0.0;
  std::sort(preds.begin(), preds.end(), [](const ApPred& a, const ApPred& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.interval.t_s != b.interval.t_s) return a.interval.t_s < b.interval.t_s;
    if (a.video != b.video) return a.video < b.video;
    return a.interval.t_e < b.interval.t_e;
  });

  std::vector<char> matched(gts.size(), 0);
  std::vector<char> is_tp(preds.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    int best = -1;
    double best_tiou = 0.0;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (matched[j] || gts[j].video != preds[i].video) continue;
      const double t = tiou(preds[i].interval, gts[j].interval);
      const bool better =
          t > best_tiou ||
          (t == best_tiou && best >= 0 &&
           gts[j].interval.t_s < gts[static_cast<std::size_t>(best)].interval.t_s);
      if (best < 0 ? t > 0.0 : better) {
        best = static_cast<int>(j);
        best_tiou = t;
      }
    }
    if (best >= 0 && best_tiou >= thr) {
      matched[static_cast<std::size_t>(best)] = 1;
      is_tp[i] = 1;
    }
  }

  const std::size_t n = preds.size();
  std::vector<double> precision(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += is_tp[i];
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double ap = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (is_tp[i]) ap += precision[i];
  return ap / static_cast<double>(gts.size());
}

struct EvalReport {
  std::map<int, std::map<double, double>> ap;  // class id -> threshold -> AP
  double map_base = 0.0;
  double map_novel = 0.0;
  double map_all = 0.0;
};

// gts and preds are aligned per video. Classes with no ground truth anywhere
// are left out of every mean rather than scored zero.
inline EvalReport evaluate(const std::vector<AnnotationSet>& gts,
                           const std::vector<std::vector<ScoredInstance>>& preds,
                           const SplitSpec& split, const EvalConfig& cfg) {
  cfg.validate();
  if (gts.size() != preds.size())
    throw DimensionError("evaluate: ground-truth/prediction video counts differ");

  std::set<int> vocab(split.base_ids.begin(), split.base_ids.end());
  vocab.insert(split.novel_ids.begin(), split.novel_ids.end());
  for (const auto& vp : preds)
    for (const ScoredInstance& s : vp)
      if (!vocab.count(s.category)) throw VocabError("evaluate: prediction category not in split");

  std::set<int> present;
  for (const AnnotationSet& va : gts)
    for (const ActionInstance& a : va) present.insert(a.category);

  EvalReport rep;
  for (int c : present) {
    std::vector<ApGt> cls_gts;
    std::vector<ApPred> cls_preds;
    for (std::size_t v = 0; v < gts.size(); ++v) {
      for (const ActionInstance& a : gts[v])
        if (a.category == c) cls_gts.push_back({static_cast<int>(v), a.interval()});
      for (const ScoredInstance& s : preds[v])
        if (s.category == c) cls_preds.push_back({static_cast<int>(v), s.interval, s.score});
    }
    for (double thr : cfg.thresholds)
      rep.ap[c][thr] = average_precision(cls_preds, cls_gts, thr);
  }

  auto mean_over = [&](const std::vector<int>& ids) {
    double sum = 0.0;
    int n = 0;
    for (int c : ids) {
      auto it = rep.ap.find(c);
      if (it == rep.ap.end()) continue;
      for (const auto& [thr, v] : it->second) {
        sum += v;
        ++n;
      }
    }
    return n > 0 ? sum / n : 0.0;
  };
  rep.map_base = mean_over(split.base_ids);
  rep.map_novel = mean_over(split.novel_ids);
  std::vector<int> all(split.base_ids);
  all.insert(all.end(), split.novel_ids.begin(), split.novel_ids.end());
  rep.map_all = mean_over(all);
  return rep;
}

// Mean AP across classes at one threshold, used by quick checks.
inline double map_at(const EvalReport& rep, double thr) {
  double sum = 0.0;
  int n = 0;
  for (const auto& [c, per_thr] : rep.ap) {
    auto it = per_thr.find(thr);
    if (it == per_thr.end())
      throw ConfigError("map_at: threshold not in the evaluated grid");
    sum += it->second;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

}  // namespace mgca
