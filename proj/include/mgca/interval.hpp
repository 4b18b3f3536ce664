#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mgca/errors.hpp"
#include "mgca/tensor.hpp"

// Interval arithmetic over [t_s, t_e] in seconds: tIoU, a 1-D DIoU loss with
// analytic endpoint gradients, and decoding of per-position onset/offset
// predictions into time-domain proposals.

namespace mgca {

struct Interval {
  double t_s = 0.0;
  double t_e = 0.0;

  double length() const { return t_e - t_s; }
  double center() const { return 0.5 * (t_s + t_e); }
  bool valid() const {
    return std::isfinite(t_s) && std::isfinite(t_e) && t_s >= 0.0 && t_s <= t_e;
  }
};

inline void require_valid(const Interval& a, const char* what) {
  if (!a.valid()) throw ContractError(std::string(what) + ": invalid interval");
}

inline double tiou(const Interval& a, const Interval& b) {
  require_valid(a, "tiou");
  require_valid(b, "tiou");
  const double inter = std::min(a.t_e, b.t_e) - std::max(a.t_s, b.t_s);
  const double uni = a.length() + b.length() - std::max(inter, 0.0);
  if (uni <= 0.0) {
    // two identical zero-length intervals coincide completely
    return (a.t_s == b.t_s && a.t_e == b.t_e) ? 1.0 : 0.0;
  }
  return std::max(inter, 0.0) / uni;
}

struct DiouResult {
  double loss = 0.0;
  double d_ts = 0.0;  // dloss / d pred.t_s
  double d_te = 0.0;  // dloss / d pred.t_e
};

// Core DIoU on raw endpoints: loss = 1 - tIoU + rho^2/c^2 with rho the center
// distance and c the enclosing span. Works for any ps <= pe (negative
// coordinates allowed, the loss is used in level-normalized space); gt must
// have positive length so union and enclosing span stay positive.
inline DiouResult diou_raw(double ps, double pe, double gs, double ge) {
  if (!(pe >= ps)) throw ContractError("diou: pred endpoints out of order");
  if (!(ge > gs)) throw ContractError("diou: gt must have positive length");

  const double inter_raw = std::min(pe, ge) - std::max(ps, gs);
  const double inter = std::max(inter_raw, 0.0);
  const double uni = (pe - ps) + (ge - gs) - inter;
  const double iou = inter / uni;

  const double rho = 0.5 * (ps + pe) - 0.5 * (gs + ge);
  const double c = std::max(pe, ge) - std::min(ps, gs);

  DiouResult r;
  r.loss = 1.0 - iou + (rho * rho) / (c * c);

  // subgradients at ties resolved by the comparisons below
  double di_ds = 0.0, di_de = 0.0;
  if (inter_raw > 0.0) {
    if (ps >= gs) di_ds = -1.0;
    if (pe <= ge) di_de = 1.0;
  }
  const double du_ds = -1.0 - di_ds;
  const double du_de = 1.0 - di_de;
  const double inv_u2 = 1.0 / (uni * uni);
  const double diou_ds = (di_ds * uni - inter * du_ds) * inv_u2;
  const double diou_de = (di_de * uni - inter * du_de) * inv_u2;

  const double dc_ds = (ps <= gs) ? -1.0 : 0.0;
  const double dc_de = (pe >= ge) ? 1.0 : 0.0;
  const double c2 = c * c;
  const double pen_ds = rho / c2 - 2.0 * rho * rho * dc_ds / (c2 * c);
  const double pen_de = rho / c2 - 2.0 * rho * rho * dc_de / (c2 * c);

  r.d_ts = -diou_ds + pen_ds;
  r.d_te = -diou_de + pen_de;
  return r;
}

inline DiouResult diou_loss(const Interval& pred, const Interval& gt) {
  require_valid(pred, "diou_loss");
  require_valid(gt, "diou_loss");
  return diou_raw(pred.t_s, pred.t_e, gt.t_s, gt.t_e);
}

// Multi-resolution grid the heads run on. Level l has lengths[l] positions of
// stride strides[l]; position j sits at time (j + 0.5) * stride * snippet_sec.
struct FpnLayout {
  std::vector<int> strides;
  std::vector<int> lengths;
  double snippet_sec = 1.0;

  int total() const {
    int t = 0;
    for (int len : lengths) t += len;
    return t;
  }
  double unit(int level) const { return strides[static_cast<std::size_t>(level)] * snippet_sec; }
  double position_time(int level, int j) const { return (j + 0.5) * unit(level); }
};

struct Proposal {
  Interval interval;
  int level = 0;
  int pos = 0;          // position index within the level
  double t_center = 0;  // position time before onset/offset expansion
};

using ProposalSet = std::vector<Proposal>;

// onset_offset[l] is lengths[l] x 2 rows of rectified (d_on, d_off). The
// decoded interval is [t - d_on*unit, t + d_off*unit], both endpoints clamped
// to [0, duration].
inline ProposalSet decode_proposals(const std::vector<Tensor2D>& onset_offset,
                                    const FpnLayout& layout, double duration) {
  if (!(duration >= 0.0) || !(layout.snippet_sec > 0.0))
    throw ContractError("decode_proposals: need duration >= 0 and positive snippet length");
  if (onset_offset.size() != layout.lengths.size())
    throw DimensionError("decode_proposals: level count mismatch");
  for (int s : layout.strides)
    if (s <= 0) throw ContractError("decode_proposals: strides must be positive");

  ProposalSet out;
  out.reserve(static_cast<std::size_t>(layout.total()));
  for (std::size_t l = 0; l < onset_offset.size(); ++l) {
    const Tensor2D& oo = onset_offset[l];
    if (oo.cols != 2 || oo.rows != layout.lengths[l])
      throw DimensionError("decode_proposals: onset/offset must be T_l x 2");
    const double u = layout.unit(static_cast<int>(l));
    for (int j = 0; j < oo.rows; ++j) {
      const double d_on = oo.at(j, 0);
      const double d_off = oo.at(j, 1);
      if (d_on < 0.0 || d_off < 0.0)
        throw ContractError("decode_proposals: onset/offset must be rectified");
      const double t = layout.position_time(static_cast<int>(l), j);
      Proposal p;
      p.level = static_cast<int>(l);
      p.pos = j;
      p.t_center = t;
      p.interval.t_s = std::clamp(t - d_on * u, 0.0, duration);
      p.interval.t_e = std::clamp(t + d_off * u, 0.0, duration);
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace mgca
