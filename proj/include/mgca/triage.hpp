#pragma once

#include <vector>

#include "mgca/errors.hpp"
#include "mgca/interval.hpp"
#include "mgca/tensor.hpp"

// Splits decoded proposals three ways on two thresholds: confident base-class
// detections, likely actions the base classifier cannot name (candidates for
// open-vocabulary classification), and background.

namespace mgca {

struct TriageConfig {
  double lambda_retain = 0.5;  // minimum presence score to keep a proposal
  double lambda_base = 0.5;    // minimum base-class probability to name it
};

struct BaseInstance {
  Interval interval;
  int category = 0;  // index into the base vocabulary
  double score = 0.0;
};

struct NovelProposal {
  Interval interval;
  double aps = 0.0;
  int proposal_index = 0;
};

struct TriageResult {
  std::vector<BaseInstance> base_instances;
  std::vector<NovelProposal> novel_proposals;
  int discarded = 0;
};

// Base detections are ranked by presence * class probability so both the
// localization and classification confidence weigh in; ties in the class
// argmax go to the lowest index.
inline TriageResult triage_proposals(const ProposalSet& proposals,
                                     const std::vector<double>& p_aps, const Tensor2D& p_base,
                                     const TriageConfig& cfg, int n_base) {
  if (p_aps.size() != proposals.size())
    throw DimensionError("triage: presence score count != proposal count");
  if (static_cast<std::size_t>(p_base.rows) != proposals.size() || p_base.cols != n_base)
    throw DimensionError("triage: base probability matrix must be N x n_base");

  TriageResult r;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const double aps = p_aps[i];
    if (aps < cfg.lambda_retain) {
      ++r.discarded;
      continue;
    }
    int arg = 0;
    for (int c = 1; c < n_base; ++c)
      if (p_base.at(static_cast<int>(i), c) > p_base.at(static_cast<int>(i), arg)) arg = c;
    const double best = p_base.at(static_cast<int>(i), arg);
    if (best >= cfg.lambda_base) {
      BaseInstance inst;
      inst.interval = proposals[i].interval;
      inst.category = arg;
      inst.score = aps * best;
      r.base_instances.push_back(inst);
    } else {
      NovelProposal np;
      np.interval = proposals[i].interval;
      np.aps = aps;
      np.proposal_index = static_cast<int>(i);
      r.novel_proposals.push_back(np);
    }
  }
  return r;
}

}  // namespace mgca
