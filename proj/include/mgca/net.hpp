#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mgca/errors.hpp"
#include "mgca/interval.hpp"
#include "mgca/rng.hpp"
#include "mgca/serial.hpp"
#include "mgca/tensor.hpp"

// The network: a small temporal conv pyramid over the video features, three
// per-position heads (interval regression, base-category classification,
// action presence), and the projection layer used by the contrastive stage.

namespace mgca {

struct ModelConfig {
  int d_vid = 32;
  int d_fpn = 32;
  int d_img = 16;
  int d_text = 16;
  int levels = 4;
  std::vector<int> strides = {1, 2, 4, 8};
  int n_base = 1;
  int head_width = 0;  // 0 = use d_fpn
  std::uint64_t seed = 1;

  int width() const { return head_width > 0 ? head_width : d_fpn; }

  void validate() const {
    if (d_vid < 1 || d_fpn < 1 || d_img < 1 || d_text < 1 || n_base < 1)
      throw ConfigError("model config: dims and n_base must be >= 1");
    if (levels < 1 || static_cast<int>(strides.size()) != levels)
      throw ConfigError("model config: strides size must equal levels");
    if (strides[0] != 1) throw ConfigError("model config: first stride must be 1");
    for (int l = 1; l < levels; ++l)
      if (strides[static_cast<std::size_t>(l)] != 2 * strides[static_cast<std::size_t>(l) - 1])
        throw ConfigError("model config: each stride must double the previous one");
  }

  std::string canonical() const {
    std::string s = "d_vid=" + std::to_string(d_vid) + ";d_fpn=" + std::to_string(d_fpn) +
                    ";d_img=" + std::to_string(d_img) + ";d_text=" + std::to_string(d_text) +
                    ";levels=" + std::to_string(levels) + ";strides=";
    for (int v : strides) s += std::to_string(v) + ",";
    s += ";n_base=" + std::to_string(n_base) + ";width=" + std::to_string(width());
    return s;
  }

  std::uint64_t digest() const { return serial::fnv1a64(canonical()); }
};

struct ConvBlock {
  Tensor2D w;  // (k*Din) x Dout
  Tensor2D b;  // 1 x Dout
};

struct HeadParams {
  ConvBlock c1;   // k=3
  ConvBlock c2;   // k=3
  ConvBlock out;  // k=1
};

struct ModelParams {
  ConvBlock stem;                 // d_vid -> d_fpn, k=3 s=1
  std::vector<ConvBlock> down;    // levels-1 stride-2 convs, d_fpn -> d_fpn
  HeadParams loc;                 // 2 outputs (onset, offset)
  HeadParams cls;                 // n_base outputs
  HeadParams aps;                 // 1 output
  Tensor2D proj_w1, proj_b1;      // d_img -> d_img
  Tensor2D proj_w2, proj_b2;

  std::vector<std::pair<std::string, Tensor2D*>> named() {
    std::vector<std::pair<std::string, Tensor2D*>> r;
    r.emplace_back("stem.w", &stem.w);
    r.emplace_back("stem.b", &stem.b);
    for (std::size_t l = 0; l < down.size(); ++l) {
      r.emplace_back("down" + std::to_string(l + 1) + ".w", &down[l].w);
      r.emplace_back("down" + std::to_string(l + 1) + ".b", &down[l].b);
    }
    auto head = [&r](const char* name, HeadParams& h) {
      std::string p(name);
      r.emplace_back(p + ".c1.w", &h.c1.w);
      r.emplace_back(p + ".c1.b", &h.c1.b);
      r.emplace_back(p + ".c2.w", &h.c2.w);
      r.emplace_back(p + ".c2.b", &h.c2.b);
      r.emplace_back(p + ".out.w", &h.out.w);
      r.emplace_back(p + ".out.b", &h.out.b);
    };
    head("loc", loc);
    head("cls", cls);
    head("aps", aps);
    r.emplace_back("proj.w1", &proj_w1);
    r.emplace_back("proj.b1", &proj_b1);
    r.emplace_back("proj.w2", &proj_w2);
    r.emplace_back("proj.b2", &proj_b2);
    return r;
  }

  void zero_grad() {
    for (auto& [name, t] : named()) t->zero_grad();
  }
};

namespace detail {

inline Tensor2D init_weight(int rows, int cols, int fan_in, Rng& rng) {
  Tensor2D t(rows, cols);
  const double bound = std::sqrt(1.0 / fan_in);
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

inline Tensor2D init_bias(int cols, double fill = 0.0) {
  Tensor2D t(1, cols, fill);
  t.set_requires_grad(true);
  return t;
}

inline ConvBlock init_conv(int k, int din, int dout, Rng& rng, double bias_fill = 0.0) {
  ConvBlock c;
  c.w = init_weight(k * din, dout, k * din, rng);
  c.b = init_bias(dout, bias_fill);
  return c;
}

}  // namespace detail

// Output biases of the probability heads start at -2.19 (sigmoid ~= 0.1) so
// the focal and presence losses are not swamped by the negative majority at
// step 0.  Biases feeding a rectifier start at 0.1 instead of 0 so no unit
// sits exactly on the kink at initialization.
inline ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x6d6f64656cull));
  const int w = cfg.width();
  ModelParams p;
  p.stem = detail::init_conv(3, cfg.d_vid, cfg.d_fpn, rng, 0.1);
  for (int l = 1; l < cfg.levels; ++l)
    p.down.push_back(detail::init_conv(3, cfg.d_fpn, cfg.d_fpn, rng, 0.1));
  auto make_head = [&](int n_out, double out_bias) {
    HeadParams h;
    h.c1 = detail::init_conv(3, cfg.d_fpn, w, rng, 0.1);
    h.c2 = detail::init_conv(3, w, w, rng, 0.1);
    h.out = detail::init_conv(1, w, n_out, rng, out_bias);
    return h;
  };
  p.loc = make_head(2, 0.1);
  p.cls = make_head(cfg.n_base, -2.19);
  p.aps = make_head(1, -2.19);
  p.proj_w1 = detail::init_weight(cfg.d_img, cfg.d_img, cfg.d_img, rng);
  p.proj_b1 = detail::init_bias(cfg.d_img, 0.1);
  p.proj_w2 = detail::init_weight(cfg.d_img, cfg.d_img, cfg.d_img, rng);
  // A random offset keeps every projected row away from the origin, where the
  // normalization is ill-conditioned, even if the hidden layer is fully dead.
  p.proj_b2 = detail::init_weight(1, cfg.d_img, cfg.d_img, rng);
  return p;
}

inline long param_count(const ModelConfig& cfg) {
  const long w = cfg.width();
  auto c3 = [](long din, long dout) { return 3 * din * dout + dout; };
  auto c1 = [](long din, long dout) { return din * dout + dout; };
  long n = c3(cfg.d_vid, cfg.d_fpn) + (cfg.levels - 1) * c3(cfg.d_fpn, cfg.d_fpn);
  auto head = [&](long n_out) { return c3(cfg.d_fpn, w) + c3(w, w) + c1(w, n_out); };
  n += head(2) + head(cfg.n_base) + head(1);
  n += 2 * (static_cast<long>(cfg.d_img) * cfg.d_img + cfg.d_img);
  return n;
}

inline FpnLayout fpn_layout_for(const ModelConfig& cfg, int t_vid, double snippet_sec) {
  if (t_vid < (1 << (cfg.levels - 1)))
    throw ConfigError("input too short for the configured pyramid depth");
  FpnLayout layout;
  layout.strides = cfg.strides;
  layout.snippet_sec = snippet_sec;
  layout.lengths.resize(static_cast<std::size_t>(cfg.levels));
  int t = t_vid;
  for (int l = 0; l < cfg.levels; ++l) {
    layout.lengths[static_cast<std::size_t>(l)] = t;
    t = (t - 1) / 2 + 1;  // stride-2 conv with k=3, p=1 halves (rounding up)
  }
  return layout;
}

struct BackboneOut {
  std::vector<NodeId> levels;  // per-level T_l x d_fpn
};

inline BackboneOut backbone_forward(Graph& g, NodeId f_vid, ModelParams& p,
                                    const ModelConfig& cfg) {
  if (g.value(f_vid).cols != cfg.d_vid)
    throw DimensionError("backbone_forward: input cols != d_vid");
  if (g.value(f_vid).rows < (1 << (cfg.levels - 1)))
    throw ConfigError("input too short for the configured pyramid depth");
  BackboneOut out;
  NodeId x = g.relu(g.conv1d(f_vid, g.leaf(p.stem.w), g.leaf(p.stem.b), 3, 1, 1));
  out.levels.push_back(x);
  for (int l = 1; l < cfg.levels; ++l) {
    ConvBlock& c = p.down[static_cast<std::size_t>(l) - 1];
    x = g.relu(g.conv1d(x, g.leaf(c.w), g.leaf(c.b), 3, 2, 1));
    out.levels.push_back(x);
  }
  return out;
}

struct HeadsOut {
  NodeId onset_offset;  // T_fpn x 2, rectified
  NodeId p_base;        // T_fpn x n_base, sigmoid
  NodeId p_aps;         // T_fpn x 1, sigmoid
  std::vector<int> level_lengths;
};

// Each head runs the same weights over every pyramid level; level outputs are
// stacked in level order so row i matches proposal i after decoding.
inline HeadsOut heads_forward(Graph& g, const BackboneOut& fpn, ModelParams& p,
                              const ModelConfig& cfg) {
  auto run_head = [&](HeadParams& h) {
    std::vector<NodeId> per_level;
    for (NodeId x : fpn.levels) {
      NodeId y = g.relu(g.conv1d(x, g.leaf(h.c1.w), g.leaf(h.c1.b), 3, 1, 1));
      y = g.relu(g.conv1d(y, g.leaf(h.c2.w), g.leaf(h.c2.b), 3, 1, 1));
      per_level.push_back(g.conv1d(y, g.leaf(h.out.w), g.leaf(h.out.b), 1, 1, 0));
    }
    return g.concat_rows(per_level);
  };
  HeadsOut out;
  out.onset_offset = g.relu(run_head(p.loc));
  out.p_base = g.sigmoid(run_head(p.cls));
  out.p_aps = g.sigmoid(run_head(p.aps));
  for (NodeId x : fpn.levels) out.level_lengths.push_back(g.value(x).rows);
  return out;
}

inline NodeId proj_forward(Graph& g, NodeId f_np, ModelParams& p) {
  NodeId h = g.relu(g.affine(f_np, g.leaf(p.proj_w1), g.leaf(p.proj_b1)));
  return g.row_normalize(g.affine(h, g.leaf(p.proj_w2), g.leaf(p.proj_b2)));
}

// Splits a stacked T_fpn x C head output back into per-level blocks.
inline std::vector<Tensor2D> split_levels(const Tensor2D& stacked,
                                          const std::vector<int>& level_lengths) {
  std::vector<Tensor2D> out;
  int row = 0;
  for (int len : level_lengths) {
    Tensor2D t(len, stacked.cols);
    for (int r = 0; r < len; ++r)
      for (int c = 0; c < stacked.cols; ++c) t.at(r, c) = stacked.at(row + r, c);
    out.push_back(std::move(t));
    row += len;
  }
  if (row != stacked.rows) throw DimensionError("split_levels: lengths do not cover rows");
  return out;
}

}  // namespace mgca
