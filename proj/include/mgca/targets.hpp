#pragma once

#include <cmath>
#include <vector>

#include "mgca/data.hpp"
#include "mgca/errors.hpp"
#include "mgca/interval.hpp"

// Training-target construction. Positions are positive when their center time
// falls inside an annotated interval (inclusive bounds); the presence-score
// target at a positive position is the best tIoU its decoded proposal reaches
// against any covering annotation.

namespace mgca {

struct ApsTargets {
  std::vector<int> p_loc;         // 0/1 per position
  std::vector<double> p_aps_hat;  // tIoU target, nonzero only where p_loc = 1
};

inline ApsTargets build_aps_targets(const AnnotationSet& annotations,
                                    const ProposalSet& proposals) {
  ApsTargets t;
  t.p_loc.assign(proposals.size(), 0);
  t.p_aps_hat.assign(proposals.size(), 0.0);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const Proposal& p = proposals[i];
    double best = 0.0;
    bool covered = false;
    for (const ActionInstance& a : annotations) {
      if (p.t_center < a.t_s || p.t_center > a.t_e) continue;
      covered = true;
      best = std::max(best, tiou(p.interval, a.interval()));
    }
    if (covered) {
      t.p_loc[i] = 1;
      t.p_aps_hat[i] = best;
    }
  }
  return t;
}

struct ClsRegTargets {
  std::vector<int> class_id;  // base-category index, -1 = background
  std::vector<double> d_on;   // level-normalized, defined where class_id >= 0
  std::vector<double> d_off;
  int n_pos = 0;
};

// Positions covered by several annotations resolve to the shortest one, so
// brief instances nested inside long ones keep their own supervision.
inline ClsRegTargets assign_cls_reg_targets(const AnnotationSet& annotations,
                                            const FpnLayout& layout, int n_base) {
  const int total = layout.total();
  ClsRegTargets t;
  t.class_id.assign(static_cast<std::size_t>(total), -1);
  t.d_on.assign(static_cast<std::size_t>(total), 0.0);
  t.d_off.assign(static_cast<std::size_t>(total), 0.0);

  for (const ActionInstance& a : annotations)
    if (a.category < 0 || a.category >= n_base)
      throw VocabError("assign_cls_reg_targets: category outside base vocabulary");

  int i = 0;
  for (std::size_t l = 0; l < layout.lengths.size(); ++l) {
    const double u = layout.unit(static_cast<int>(l));
    for (int j = 0; j < layout.lengths[l]; ++j, ++i) {
      const double ti = layout.position_time(static_cast<int>(l), j);
      const ActionInstance* best = nullptr;
      for (const ActionInstance& a : annotations) {
        if (ti < a.t_s || ti > a.t_e) continue;
        if (!best || a.t_e - a.t_s < best->t_e - best->t_s) best = &a;
      }
      if (!best) continue;
      t.class_id[static_cast<std::size_t>(i)] = best->category;
      t.d_on[static_cast<std::size_t>(i)] = (ti - best->t_s) / u;
      t.d_off[static_cast<std::size_t>(i)] = (best->t_e - ti) / u;
      ++t.n_pos;
    }
  }
  return t;
}

}  // namespace mgca
