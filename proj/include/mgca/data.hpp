#pragma once

#include <string>
#include <vector>

#include "mgca/errors.hpp"
#include "mgca/interval.hpp"
#include "mgca/tensor.hpp"

// In-memory corpus model shared by training, inference and evaluation.
// Categories are indices into a single vocabulary list; splits remap them.

namespace mgca {

struct ActionInstance {
  double t_s = 0.0;
  double t_e = 0.0;
  int category = 0;  // index into the vocabulary

  Interval interval() const { return {t_s, t_e}; }
};

using AnnotationSet = std::vector<ActionInstance>;

struct FeatureMatrix {
  Tensor2D feat;
  double rate = 1.0;  // rows per second

  double duration() const { return feat.rows / rate; }
};

struct VideoSample {
  std::string id;
  double duration_sec = 0.0;
  FeatureMatrix f_vid;
  FeatureMatrix f_img;
  AnnotationSet annotations;
};

struct Dataset {
  std::vector<std::string> categories;
  std::vector<VideoSample> videos;

  int category_index(const std::string& name) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
      if (categories[i] == name) return static_cast<int>(i);
    throw VocabError("unknown category: " + name);
  }
};

inline void validate_annotations(const VideoSample& v, int n_categories) {
  for (const ActionInstance& a : v.annotations) {
    if (a.category < 0 || a.category >= n_categories)
      throw VocabError("annotation category out of range in video " + v.id);
    if (!(a.t_s >= 0.0 && a.t_s <= a.t_e && a.t_e <= v.duration_sec))
      throw ContractError("annotation outside video bounds in video " + v.id);
  }
}

}  // namespace mgca
