#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "mgca/errors.hpp"

// Dense row-major 2-D tensors and a tape-style computation graph with
// reverse-mode gradients. The op set is the closed list the network needs;
// there is no broadcasting beyond the affine/conv bias row. All math is in
// 64-bit floats so finite-difference checks at 1e-4 are meaningful.

namespace mgca {

struct Tensor2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major, rows*cols
  bool requires_grad = false;
  std::vector<double> grad;  // same length as data when requires_grad

  Tensor2D() = default;
  Tensor2D(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(checked_size(r, c), fill) {}

  static Tensor2D from(int r, int c, std::initializer_list<double> v) {
    Tensor2D t(r, c);
    if (v.size() != t.data.size()) throw DimensionError("initializer size mismatch");
    std::size_t i = 0;
    for (double x : v) t.data[i++] = x;
    return t;
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }

  void set_requires_grad(bool on) {
    requires_grad = on;
    if (on)
      grad.assign(data.size(), 0.0);
    else
      grad.clear();
  }

  void zero_grad() {
    if (requires_grad) grad.assign(data.size(), 0.0);
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  static std::size_t checked_size(int r, int c) {
    if (r < 0 || c < 0) throw DimensionError("tensor dims must be non-negative");
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
  }
};

enum class Op {
  kLeaf,
  kConst,
  kConv1d,
  kAffine,
  kMatmul,
  kRelu,
  kSigmoid,
  kMeanRows,
  kAdd,
  kMul,
  kSum,
  kScale,
  kConcatRows,
  kRowNormalize,
  kCustom,
};

using NodeId = int;

// Extension point for ops whose local gradients are hand-derived (the loss
// terms live behind this). forward must be a pure function of the inputs so
// the graph can be re-evaluated for finite-difference probes.
struct CustomOp {
  std::string name;
  std::function<Tensor2D(const std::vector<const Tensor2D*>&)> forward;
  // Adds dL/dinput into input_grads (zero-initialized, input shapes).
  std::function<void(const std::vector<const Tensor2D*>& inputs, const Tensor2D& out,
                     const Tensor2D& out_grad, const std::vector<Tensor2D*>& input_grads)>
      backward;
};

// Tape of ops in insertion order; insertion order is the topological order.
// Leaves reference caller-owned tensors, so a graph must not outlive them.
// Construction is eager: each node's output is computed when it is added.
// A graph instance is single-threaded; distinct graphs are independent.
class Graph {
 public:
  // Registering the same tensor again returns the existing node, so every use
  // of a shared parameter funnels its gradient into one accumulation buffer.
  NodeId leaf(Tensor2D& t) {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].op == Op::kLeaf && nodes_[i].ext == &t) return static_cast<NodeId>(i);
    Node n;
    n.op = Op::kLeaf;
    n.ext = &t;
    return push(std::move(n));
  }

  NodeId constant(Tensor2D v) {
    Node n;
    n.op = Op::kConst;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  // x: [T x Din], w: [(k*Din) x Dout] with row = tap*Din + din, b: [1 x Dout].
  // Cross-correlation over the time axis with zero padding.
  NodeId conv1d(NodeId x, NodeId w, NodeId b, int k, int s, int p) {
    if (k < 1 || s < 1 || p < 0) throw ContractError("conv1d: need k>=1, s>=1, p>=0");
    Node n;
    n.op = Op::kConv1d;
    n.in = {x, w, b};
    n.k = k;
    n.s = s;
    n.p = p;
    return push(std::move(n));
  }

  // x: [N x Din], w: [Din x Dout], b: [1 x Dout] broadcast over rows.
  NodeId affine(NodeId x, NodeId w, NodeId b) {
    Node n;
    n.op = Op::kAffine;
    n.in = {x, w, b};
    return push(std::move(n));
  }

  NodeId matmul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::kMatmul;
    n.in = {a, b};
    return push(std::move(n));
  }

  NodeId relu(NodeId x) { return unary(Op::kRelu, x); }
  NodeId sigmoid(NodeId x) { return unary(Op::kSigmoid, x); }

  // Mean over rows [row_begin, row_end) -> [1 x cols].
  NodeId mean_rows(NodeId x, int row_begin, int row_end) {
    Node n;
    n.op = Op::kMeanRows;
    n.in = {x};
    n.r0 = row_begin;
    n.r1 = row_end;
    return push(std::move(n));
  }

  NodeId add(NodeId a, NodeId b) { return binary(Op::kAdd, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(Op::kMul, a, b); }

  NodeId sum(NodeId x) { return unary(Op::kSum, x); }

  NodeId scale(NodeId x, double alpha) {
    Node n;
    n.op = Op::kScale;
    n.in = {x};
    n.alpha = alpha;
    return push(std::move(n));
  }

  NodeId concat_rows(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ContractError("concat_rows: no inputs");
    Node n;
    n.op = Op::kConcatRows;
    n.in = xs;
    return push(std::move(n));
  }

  // L2-normalize each row; 1e-12 is added to the norm before dividing.
  NodeId row_normalize(NodeId x) { return unary(Op::kRowNormalize, x); }

  NodeId custom(const std::vector<NodeId>& xs, CustomOp op) {
    Node n;
    n.op = Op::kCustom;
    n.in = xs;
    n.cust = std::move(op);
    return push(std::move(n));
  }

  const Tensor2D& value(NodeId id) const { return nodes_[check(id)].value; }

  double scalar(NodeId id) const {
    const Tensor2D& v = value(id);
    if (v.rows != 1 || v.cols != 1) throw ContractError("scalar: node is not 1x1");
    return v.data[0];
  }

  std::size_t node_count() const { return nodes_.size(); }

  // Re-evaluates every node in insertion order from the current leaf values.
  void recompute() {
    for (Node& n : nodes_) compute(n);
  }

  // Reverse accumulation in reverse insertion order. Parameter-leaf gradients
  // are written into the external tensors' grad buffers; by default they are
  // overwritten, with accumulate=true they are added. Gradients of
  // non-parameter leaves are dropped.
  void backward(NodeId loss, bool accumulate = false) {
    const Tensor2D& lv = value(loss);
    if (lv.rows != 1 || lv.cols != 1) throw ContractError("backward: loss node must be 1x1");

    std::vector<char> reach(nodes_.size(), 0);
    std::vector<NodeId> stack = {loss};
    reach[static_cast<std::size_t>(loss)] = 1;
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      for (NodeId in : nodes_[static_cast<std::size_t>(id)].in) {
        if (!reach[static_cast<std::size_t>(in)]) {
          reach[static_cast<std::size_t>(in)] = 1;
          stack.push_back(in);
        }
      }
    }

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (reach[i])
        n.gbuf = Tensor2D(n.value.rows, n.value.cols);
      else
        n.gbuf = Tensor2D();
    }
    nodes_[static_cast<std::size_t>(loss)].gbuf.data[0] = 1.0;

    for (NodeId id = loss; id >= 0; --id) {
      if (!reach[static_cast<std::size_t>(id)]) continue;
      propagate(nodes_[static_cast<std::size_t>(id)]);
    }

    for (Node& n : nodes_) {
      if (n.op != Op::kLeaf || !n.ext->requires_grad) continue;
      if (n.ext->grad.size() != n.ext->data.size()) n.ext->grad.assign(n.ext->data.size(), 0.0);
      const bool reached = n.gbuf.size() == n.ext->data.size();
      for (std::size_t i = 0; i < n.ext->data.size(); ++i) {
        double g = reached ? n.gbuf.data[i] : 0.0;
        n.ext->grad[i] = accumulate ? n.ext->grad[i] + g : g;
      }
    }
  }

  // Central finite differences over every parameter-leaf coordinate against
  // backward(); returns the max relative error with denominator
  // max(1, |analytic|). Leaves the graph re-evaluated at the original point.
  friend double finite_difference_check(Graph& g, NodeId loss, double eps);

 private:
  struct Node {
    Op op = Op::kConst;
    std::vector<NodeId> in;
    int k = 0, s = 0, p = 0;  // conv1d
    int r0 = 0, r1 = 0;       // mean_rows
    double alpha = 1.0;       // scale
    Tensor2D* ext = nullptr;  // leaf storage
    CustomOp cust;
    Tensor2D value;
    Tensor2D gbuf;
  };

  NodeId unary(Op op, NodeId x) {
    Node n;
    n.op = op;
    n.in = {x};
    return push(std::move(n));
  }

  NodeId binary(Op op, NodeId a, NodeId b) {
    Node n;
    n.op = op;
    n.in = {a, b};
    return push(std::move(n));
  }

  NodeId check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw ContractError("bad node id");
    return id;
  }

  NodeId push(Node n) {
    for (NodeId in : n.in) check(in);
    compute(n);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  const Tensor2D& in_val(const Node& n, std::size_t i) const {
    return nodes_[static_cast<std::size_t>(n.in[i])].value;
  }

  static double stable_sigmoid(double x) {
    double y;
    if (x >= 0.0) {
      y = 1.0 / (1.0 + std::exp(-x));
    } else {
      double e = std::exp(x);
      y = e / (1.0 + e);
    }
    // keep probabilities strictly inside (0,1)
    if (y < 1e-12) y = 1e-12;
    if (y > 1.0 - 1e-12) y = 1.0 - 1e-12;
    return y;
  }

  void compute(Node& n) {
    switch (n.op) {
      case Op::kLeaf:
        n.value = *n.ext;
        n.value.requires_grad = false;
        n.value.grad.clear();
        break;
      case Op::kConst:
        break;
      case Op::kConv1d: {
        const Tensor2D& x = in_val(n, 0);
        const Tensor2D& w = in_val(n, 1);
        const Tensor2D& b = in_val(n, 2);
        const int T = x.rows, din = x.cols;
        if (w.rows != n.k * din) throw DimensionError("conv1d: weight rows != k*Din");
        const int dout = w.cols;
        if (b.rows != 1 || b.cols != dout) throw DimensionError("conv1d: bias must be 1 x Dout");
        const int tout = (T + 2 * n.p - n.k) / n.s + 1;
        if (T + 2 * n.p - n.k < 0 || tout < 1) throw ContractError("conv1d: degenerate output length");
        Tensor2D out(tout, dout);
        for (int t = 0; t < tout; ++t) {
          double* orow = &out.data[static_cast<std::size_t>(t) * dout];
          for (int c = 0; c < dout; ++c) orow[c] = b.data[c];
          const int base = t * n.s - n.p;
          for (int tap = 0; tap < n.k; ++tap) {
            const int ti = base + tap;
            if (ti < 0 || ti >= T) continue;
            const double* xrow = &x.data[static_cast<std::size_t>(ti) * din];
            for (int d = 0; d < din; ++d) {
              const double xv = xrow[d];
              if (xv == 0.0) continue;
              const double* wrow = &w.data[static_cast<std::size_t>(tap * din + d) * dout];
              for (int c = 0; c < dout; ++c) orow[c] += xv * wrow[c];
            }
          }
        }
        n.value = std::move(out);
        break;
      }
      case Op::kAffine: {
        const Tensor2D& x = in_val(n, 0);
        const Tensor2D& w = in_val(n, 1);
        const Tensor2D& b = in_val(n, 2);
        if (x.cols != w.rows) throw DimensionError("affine: inner dims mismatch");
        if (b.rows != 1 || b.cols != w.cols) throw DimensionError("affine: bias must be 1 x Dout");
        Tensor2D out(x.rows, w.cols);
        matmul_into(x, w, out);
        for (int r = 0; r < out.rows; ++r)
          for (int c = 0; c < out.cols; ++c) out.at(r, c) += b.data[c];
        n.value = std::move(out);
        break;
      }
      case Op::kMatmul: {
        const Tensor2D& a = in_val(n, 0);
        const Tensor2D& b = in_val(n, 1);
        if (a.cols != b.rows) throw DimensionError("matmul: inner dims mismatch");
        Tensor2D out(a.rows, b.cols);
        matmul_into(a, b, out);
        n.value = std::move(out);
        break;
      }
      case Op::kRelu: {
        const Tensor2D& x = in_val(n, 0);
        Tensor2D out(x.rows, x.cols);
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
        n.value = std::move(out);
        break;
      }
      case Op::kSigmoid: {
        const Tensor2D& x = in_val(n, 0);
        Tensor2D out(x.rows, x.cols);
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = stable_sigmoid(x.data[i]);
        n.value = std::move(out);
        break;
      }
      case Op::kMeanRows: {
        const Tensor2D& x = in_val(n, 0);
        if (n.r0 < 0 || n.r1 <= n.r0 || n.r1 > x.rows)
          throw ContractError("mean_rows: bad row range");
        Tensor2D out(1, x.cols);
        for (int r = n.r0; r < n.r1; ++r)
          for (int c = 0; c < x.cols; ++c) out.data[static_cast<std::size_t>(c)] += x.at(r, c);
        const double inv = 1.0 / (n.r1 - n.r0);
        for (double& v : out.data) v *= inv;
        n.value = std::move(out);
        break;
      }
      case Op::kAdd:
      case Op::kMul: {
        const Tensor2D& a = in_val(n, 0);
        const Tensor2D& b = in_val(n, 1);
        if (a.rows != b.rows || a.cols != b.cols)
          throw DimensionError("elementwise: shape mismatch");
        Tensor2D out(a.rows, a.cols);
        if (n.op == Op::kAdd)
          for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
        else
          for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
        n.value = std::move(out);
        break;
      }
      case Op::kSum: {
        const Tensor2D& x = in_val(n, 0);
        Tensor2D out(1, 1);
        for (double v : x.data) out.data[0] += v;
        n.value = std::move(out);
        break;
      }
      case Op::kScale: {
        const Tensor2D& x = in_val(n, 0);
        Tensor2D out(x.rows, x.cols);
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = n.alpha * x.data[i];
        n.value = std::move(out);
        break;
      }
      case Op::kConcatRows: {
        const int cols = in_val(n, 0).cols;
        int rows = 0;
        for (std::size_t i = 0; i < n.in.size(); ++i) {
          const Tensor2D& x = in_val(n, i);
          if (x.cols != cols) throw DimensionError("concat_rows: column mismatch");
          rows += x.rows;
        }
        Tensor2D out(rows, cols);
        int r = 0;
        for (std::size_t i = 0; i < n.in.size(); ++i) {
          const Tensor2D& x = in_val(n, i);
          std::copy(x.data.begin(), x.data.end(),
                    out.data.begin() + static_cast<std::ptrdiff_t>(r) * cols);
          r += x.rows;
        }
        n.value = std::move(out);
        break;
      }
      case Op::kRowNormalize: {
        const Tensor2D& x = in_val(n, 0);
        Tensor2D out(x.rows, x.cols);
        for (int r = 0; r < x.rows; ++r) {
          double ss = 0.0;
          for (int c = 0; c < x.cols; ++c) ss += x.at(r, c) * x.at(r, c);
          const double norm = std::sqrt(ss) + 1e-12;
          for (int c = 0; c < x.cols; ++c) out.at(r, c) = x.at(r, c) / norm;
        }
        n.value = std::move(out);
        break;
      }
      case Op::kCustom: {
        std::vector<const Tensor2D*> ins;
        ins.reserve(n.in.size());
        for (std::size_t i = 0; i < n.in.size(); ++i) ins.push_back(&in_val(n, i));
        n.value = n.cust.forward(ins);
        break;
      }
    }
  }

  static void matmul_into(const Tensor2D& a, const Tensor2D& b, Tensor2D& out) {
    const int N = a.rows, K = a.cols, M = b.cols;
    for (int i = 0; i < N; ++i) {
      double* orow = &out.data[static_cast<std::size_t>(i) * M];
      for (int k = 0; k < K; ++k) {
        const double av = a.data[static_cast<std::size_t>(i) * K + k];
        if (av == 0.0) continue;
        const double* brow = &b.data[static_cast<std::size_t>(k) * M];
        for (int j = 0; j < M; ++j) orow[j] += av * brow[j];
      }
    }
  }

  Tensor2D& gin(const Node& n, std::size_t i) {
    return nodes_[static_cast<std::size_t>(n.in[i])].gbuf;
  }

  void propagate(Node& n) {
    const Tensor2D& g = n.gbuf;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kConv1d: {
        const Tensor2D& x = in_val(n, 0);
        const Tensor2D& w = in_val(n, 1);
        Tensor2D& gx = gin(n, 0);
        Tensor2D& gw = gin(n, 1);
        Tensor2D& gb = gin(n, 2);
        const int T = x.rows, din = x.cols, dout = w.cols;
        for (int t = 0; t < g.rows; ++t) {
          const double* grow = &g.data[static_cast<std::size_t>(t) * dout];
          for (int c = 0; c < dout; ++c) gb.data[c] += grow[c];
          const int base = t * n.s - n.p;
          for (int tap = 0; tap < n.k; ++tap) {
            const int ti = base + tap;
            if (ti < 0 || ti >= T) continue;
            const double* xrow = &x.data[static_cast<std::size_t>(ti) * din];
            double* gxrow = &gx.data[static_cast<std::size_t>(ti) * din];
            for (int d = 0; d < din; ++d) {
              const double* wrow = &w.data[static_cast<std::size_t>(tap * din + d) * dout];
              double* gwrow = &gw.data[static_cast<std::size_t>(tap * din + d) * dout];
              double acc = 0.0;
              for (int c = 0; c < dout; ++c) {
                acc += grow[c] * wrow[c];
                gwrow[c] += grow[c] * xrow[d];
              }
              gxrow[d] += acc;
            }
          }
        }
        break;
      }
      case Op::kAffine: {
        const Tensor2D& x = in_val(n, 0);
        const Tensor2D& w = in_val(n, 1);
        Tensor2D& gx = gin(n, 0);
        Tensor2D& gw = gin(n, 1);
        Tensor2D& gb = gin(n, 2);
        const int N = x.rows, K = x.cols, M = w.cols;
        for (int i = 0; i < N; ++i) {
          const double* grow = &g.data[static_cast<std::size_t>(i) * M];
          for (int j = 0; j < M; ++j) gb.data[j] += grow[j];
          for (int k = 0; k < K; ++k) {
            const double xv = x.data[static_cast<std::size_t>(i) * K + k];
            const double* wrow = &w.data[static_cast<std::size_t>(k) * M];
            double* gwrow = &gw.data[static_cast<std::size_t>(k) * M];
            double acc = 0.0;
            for (int j = 0; j < M; ++j) {
              acc += grow[j] * wrow[j];
              gwrow[j] += grow[j] * xv;
            }
            gx.data[static_cast<std::size_t>(i) * K + k] += acc;
          }
        }
        break;
      }
      case Op::kMatmul: {
        const Tensor2D& a = in_val(n, 0);
        const Tensor2D& b = in_val(n, 1);
        Tensor2D& ga = gin(n, 0);
        Tensor2D& gb = gin(n, 1);
        const int N = a.rows, K = a.cols, M = b.cols;
        for (int i = 0; i < N; ++i) {
          const double* grow = &g.data[static_cast<std::size_t>(i) * M];
          for (int k = 0; k < K; ++k) {
            const double av = a.data[static_cast<std::size_t>(i) * K + k];
            const double* brow = &b.data[static_cast<std::size_t>(k) * M];
            double* gbrow = &gb.data[static_cast<std::size_t>(k) * M];
            double acc = 0.0;
            for (int j = 0; j < M; ++j) {
              acc += grow[j] * brow[j];
              gbrow[j] += grow[j] * av;
            }
            ga.data[static_cast<std::size_t>(i) * K + k] += acc;
          }
        }
        break;
      }
      case Op::kRelu: {
        const Tensor2D& x = in_val(n, 0);
        Tensor2D& gx = gin(n, 0);
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x.data[i] > 0.0) gx.data[i] += g.data[i];
        break;
      }
      case Op::kSigmoid: {
        Tensor2D& gx = gin(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value.data[i];
          gx.data[i] += g.data[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::kMeanRows: {
        Tensor2D& gx = gin(n, 0);
        const double inv = 1.0 / (n.r1 - n.r0);
        for (int r = n.r0; r < n.r1; ++r)
          for (int c = 0; c < gx.cols; ++c) gx.at(r, c) += g.data[static_cast<std::size_t>(c)] * inv;
        break;
      }
      case Op::kAdd: {
        Tensor2D& ga = gin(n, 0);
        Tensor2D& gb = gin(n, 1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i];
          gb.data[i] += g.data[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor2D& a = in_val(n, 0);
        const Tensor2D& b = in_val(n, 1);
        Tensor2D& ga = gin(n, 0);
        Tensor2D& gb = gin(n, 1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data[i] += g.data[i] * b.data[i];
          gb.data[i] += g.data[i] * a.data[i];
        }
        break;
      }
      case Op::kSum: {
        Tensor2D& gx = gin(n, 0);
        for (double& v : gx.data) v += g.data[0];
        break;
      }
      case Op::kScale: {
        Tensor2D& gx = gin(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += n.alpha * g.data[i];
        break;
      }
      case Op::kConcatRows: {
        int r = 0;
        for (std::size_t i = 0; i < n.in.size(); ++i) {
          Tensor2D& gx = gin(n, i);
          for (int rr = 0; rr < gx.rows; ++rr)
            for (int c = 0; c < gx.cols; ++c) gx.at(rr, c) += g.at(r + rr, c);
          r += gx.rows;
        }
        break;
      }
      case Op::kRowNormalize: {
        const Tensor2D& x = in_val(n, 0);
        Tensor2D& gx = gin(n, 0);
        for (int r = 0; r < x.rows; ++r) {
          double ss = 0.0, dot = 0.0;
          for (int c = 0; c < x.cols; ++c) {
            ss += x.at(r, c) * x.at(r, c);
            dot += g.at(r, c) * x.at(r, c);
          }
          const double raw = std::sqrt(ss);
          const double norm = raw + 1e-12;
          for (int c = 0; c < x.cols; ++c) {
            double gv = g.at(r, c) / norm;
            if (raw > 1e-300) gv -= dot * x.at(r, c) / (raw * norm * norm);
            gx.at(r, c) += gv;
          }
        }
        break;
      }
      case Op::kCustom: {
        std::vector<const Tensor2D*> ins;
        std::vector<Tensor2D*> grads;
        ins.reserve(n.in.size());
        grads.reserve(n.in.size());
        for (std::size_t i = 0; i < n.in.size(); ++i) {
          ins.push_back(&in_val(n, i));
          grads.push_back(&gin(n, i));
        }
        n.cust.backward(ins, n.value, g, grads);
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

inline double finite_difference_check(Graph& g, NodeId loss, double eps) {
  if (!(eps > 0.0) || eps > 1e-2)
    throw ContractError("finite_difference_check: eps must be in (0, 1e-2]");
  g.recompute();
  if (!std::isfinite(g.scalar(loss)))
    throw NumericError("finite_difference_check: loss is not finite");
  g.backward(loss, /*accumulate=*/false);

  double max_rel = 0.0;
  for (auto& node : g.nodes_) {
    if (node.op != Op::kLeaf || !node.ext->requires_grad) continue;
    Tensor2D& t = *node.ext;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const double orig = t.data[i];
      t.data[i] = orig + eps;
      g.recompute();
      const double fp = g.scalar(loss);
      t.data[i] = orig - eps;
      g.recompute();
      const double fm = g.scalar(loss);
      t.data[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("finite_difference_check: loss not finite under perturbation");
      const double fd = (fp - fm) / (2.0 * eps);
      const double an = t.grad[i];
      const double rel = std::fabs(fd - an) / std::max(1.0, std::fabs(an));
      if (rel > max_rel) max_rel = rel;
    }
  }
  g.recompute();
  return max_rel;
}

}  // namespace mgca
