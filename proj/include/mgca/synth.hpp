#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "mgca/data.hpp"
#include "mgca/errors.hpp"
#include "mgca/rng.hpp"
#include "mgca/tensor.hpp"

// Seeded synthetic corpus: each category is a fixed random unit direction in
// image-feature space; instances paint that direction (noised) over their
// span, background rows are isotropic noise, and the video features are a
// fixed linear image of the image features. sigma is the difficulty knob.

namespace mgca {

struct SynthConfig {
  int n_videos = 8;        // training videos
  int n_test_videos = 0;   // appended after the training block
  int t_vid_min = 88;      // video duration range, whole seconds
  int t_vid_max = 104;
  int d_vid = 32;
  int d_img = 16;          // image and text features share this dim
  int n_categories = 12;
  int templates_per_category = 5;
  int min_instances = 3;
  int max_instances = 5;
  double min_duration = 7.0;
  double min_gap = 4.0;
  double sigma = 0.1;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_videos < 1 || n_test_videos < 0) throw ConfigError("synth: need at least one video");
    if (t_vid_min < 2 || t_vid_max < t_vid_min) throw ConfigError("synth: bad duration range");
    if (d_vid < 1 || d_img < 1) throw ConfigError("synth: dims must be >= 1");
    if (n_categories < 2) throw ConfigError("synth: need at least 2 categories");
    if (templates_per_category < 1) throw ConfigError("synth: need at least 1 template");
    if (min_instances < 1 || max_instances < min_instances)
      throw ConfigError("synth: bad instance count range");
    if (!(min_duration > 0.0) || min_gap < 0.0) throw ConfigError("synth: bad duration/gap");
    if (sigma < 0.0) throw ConfigError("synth: sigma must be >= 0");
    const double worst =
        max_instances * min_duration + (max_instances + 1) * min_gap;
    if (worst > t_vid_min)
      throw ConfigError("synth: instances cannot fit the shortest video (infeasible packing)");
  }
};

struct SynthCorpus {
  Dataset data;  // training videos first, then test videos
  int n_train = 0;
  Tensor2D true_embeddings;         // n_categories x d_img, unit rows
  std::vector<Tensor2D> templates;  // per category, M x d_img, unit rows
};

namespace detail {

inline void gaussian_row(Rng& rng, double* row, int d) {
  for (int j = 0; j < d; ++j) row[j] = rng.gaussian();
}

inline void normalize_row(double* row, int d) {
  double ss = 0.0;
  for (int j = 0; j < d; ++j) ss += row[j] * row[j];
  const double norm = std::sqrt(ss) + 1e-12;
  for (int j = 0; j < d; ++j) row[j] /= norm;
}

}  // namespace detail

inline SynthCorpus generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus corpus;
  corpus.n_train = cfg.n_videos;

  for (int c = 0; c < cfg.n_categories; ++c) {
    char name[32];
    std::snprintf(name, sizeof(name), "action_%03d", c);
    corpus.data.categories.emplace_back(name);
  }

  // category directions
  Rng cat_rng(derive_seed(cfg.seed, 1));
  corpus.true_embeddings = Tensor2D(cfg.n_categories, cfg.d_img);
  for (int c = 0; c < cfg.n_categories; ++c) {
    double* row = &corpus.true_embeddings.data[static_cast<std::size_t>(c) * cfg.d_img];
    detail::gaussian_row(cat_rng, row, cfg.d_img);
    detail::normalize_row(row, cfg.d_img);
  }

  // noisy text templates around each direction
  Rng tpl_rng(derive_seed(cfg.seed, 2));
  for (int c = 0; c < cfg.n_categories; ++c) {
    Tensor2D t(cfg.templates_per_category, cfg.d_img);
    for (int m = 0; m < cfg.templates_per_category; ++m) {
      double* row = &t.data[static_cast<std::size_t>(m) * cfg.d_img];
      detail::gaussian_row(tpl_rng, row, cfg.d_img);
      for (int j = 0; j < cfg.d_img; ++j)
        row[j] = corpus.true_embeddings.at(c, j) + cfg.sigma * row[j];
      detail::normalize_row(row, cfg.d_img);
    }
    corpus.templates.push_back(std::move(t));
  }

  // fixed image-to-video feature map
  Rng map_rng(derive_seed(cfg.seed, 3));
  Tensor2D vid_map(cfg.d_img, cfg.d_vid);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_img));
  for (double& v : vid_map.data) v = map_rng.gaussian() * map_scale;

  const int total_videos = cfg.n_videos + cfg.n_test_videos;
  for (int vi = 0; vi < total_videos; ++vi) {
    Rng rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(vi)));
    VideoSample v;
    char id[32];
    std::snprintf(id, sizeof(id), "video_%04d", vi);
    v.id = id;
    const int dur = rng.uniform_int(cfg.t_vid_min, cfg.t_vid_max);
    v.duration_sec = dur;

    // place instances left to right with the slack spread over the gaps
    const int k = rng.uniform_int(cfg.min_instances, cfg.max_instances);
    const double avail = dur - (k + 1) * cfg.min_gap;
    std::vector<double> lens(static_cast<std::size_t>(k));
    double len_sum = 0.0;
    const double len_cap = std::min(avail / k, 1.5 * cfg.min_duration);
    for (double& len : lens) {
      len = rng.uniform(cfg.min_duration, len_cap);
      len_sum += len;
    }
    std::vector<double> extra(static_cast<std::size_t>(k) + 1);
    double w_sum = 0.0;
    for (double& w : extra) {
      w = rng.uniform();
      w_sum += w;
    }
    const double slack = avail - len_sum;
    double cursor = 0.0;
    for (int j = 0; j <= k; ++j) {
      cursor += cfg.min_gap + slack * extra[static_cast<std::size_t>(j)] / w_sum;
      if (j == k) break;
      ActionInstance a;
      a.t_s = cursor;
      a.t_e = cursor + lens[static_cast<std::size_t>(j)];
      a.category = rng.uniform_int(0, cfg.n_categories - 1);
      v.annotations.push_back(a);
      cursor = a.t_e;
    }

    // one image row per second; a row belongs to the instance covering its
    // center
    v.f_img.rate = 1.0;
    v.f_img.feat = Tensor2D(dur, cfg.d_img);
    for (int t = 0; t < dur; ++t) {
      double* row = &v.f_img.feat.data[static_cast<std::size_t>(t) * cfg.d_img];
      detail::gaussian_row(rng, row, cfg.d_img);
      const double center = t + 0.5;
      for (const ActionInstance& a : v.annotations) {
        if (center < a.t_s || center > a.t_e) continue;
        for (int j = 0; j < cfg.d_img; ++j)
          row[j] = corpus.true_embeddings.at(a.category, j) + cfg.sigma * row[j];
        break;
      }
      detail::normalize_row(row, cfg.d_img);
    }

    v.f_vid.rate = 1.0;
    v.f_vid.feat = Tensor2D(dur, cfg.d_vid);
    std::vector<double> noise(static_cast<std::size_t>(cfg.d_vid));
    for (int t = 0; t < dur; ++t) {
      detail::gaussian_row(rng, noise.data(), cfg.d_vid);
      for (int j = 0; j < cfg.d_vid; ++j) {
        double acc = cfg.sigma * noise[static_cast<std::size_t>(j)];
        for (int i = 0; i < cfg.d_img; ++i) acc += v.f_img.feat.at(t, i) * vid_map.at(i, j);
        v.f_vid.feat.at(t, j) = acc;
      }
    }

    corpus.data.videos.push_back(std::move(v));
  }
  return corpus;
}

}  // namespace mgca
