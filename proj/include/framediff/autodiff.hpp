#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "framediff/tensor.hpp"

// Define-by-run reverse-mode tape over Tensor. Each builder evaluates its
// node immediately (so data-dependent control flow, e.g. degenerate-frame
// fallbacks, can branch on values) and records enough to pull gradients
// back in a single reverse sweep.
//
// Neighbor aggregations that must commute with atom permutations bitwise
// (seg_sum_sorted, mean_many_sorted, center_rows) sort their addends by
// value before summing, which makes the reduction independent of input
// order at full precision.
//
// A tape is reused across steps via reset(): node slots, tensor buffers
// and index pools are retained, so steady-state training does not allocate.

namespace framediff::ad {

struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
  kInput,
  kParam,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddConst,
  kMulScalarVar,
  kDivByScalarVar,
  kMatmulNN,
  kMatmulTN,
  kMatmulNT,
  kConcatColsList,
  kConcatRowsList,
  kSliceCols,
  kSliceRows,
  kSumAll,
  kMeanManySorted,
  kSegSumSorted,
  kGatherRows,
  kSilu,
  kLayerNormRow,
  kSoftmaxRow,
  kSqnormGroups,
  kMulRowBc,
  kAddRowBc,
  kMulColBc,
  kCenterRows,
  kPdist,
  kRbfBias,
  kCross3,
  kTranspose,
  kTrace3,
  kClamp,
  kSqrt,
  kAtan2,
  kChannelInit,
  kChannelMix,
  kRepeatCols,
};

class Tape {
 public:
  // Leaves. input() copies the tensor and never receives gradients;
  // param() copies the value and accumulates d(loss)/d(value) into
  // grad_sink (length = value.size()) during backward().
  Var input(const Tensor& v);
  Var param(const Tensor& value, double* grad_sink);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_const(Var a, double c);
  Var mul_scalar_var(Var a, Var s);
  Var div_by_scalar_var(Var a, Var s);
  Var matmul(Var a, Var b);     // A[m,k] * B[k,n]
  Var matmul_tn(Var a, Var b);  // A^T * B, A stored [k,m]
  Var matmul_nt(Var a, Var b);  // A * B^T, B stored [n,k]
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var slice_cols(Var a, int c0, int c1);
  Var slice_rows(Var a, int r0, int r1);
  Var sum_all(Var a);
  Var mean_many_sorted(std::span<const Var> parts);
  // Sorted segment sum of rows: rows of a with equal seg id are summed
  // (per column, ascending value order) into the output row seg_id.
  Var seg_sum_sorted(Var a, std::span<const int> seg_ids, int n_segments);
  Var gather_rows(Var a, std::span<const int> indices);
  Var silu(Var a);
  Var layer_norm_rows(Var a, double eps = 1e-6);
  Var softmax_rows(Var a);
  Var sqnorm_groups(Var a, int group);
  Var mul_row_bc(Var a, Var row);  // a[n,c] * row[0,c]
  Var add_row_bc(Var a, Var row);
  Var mul_col_bc(Var a, Var col);  // a[n,c] * col[n,0]
  // Subtract the column mean over the listed rows; other rows pass through.
  Var center_rows(Var a, std::span<const int> live_rows);
  Var pdist(Var coords);  // N x 3 -> N x N distances, zero diagonal
  // out_ij = sum_k w[k] * exp(-(d_ij - mu_k)^2 / (2 width^2)),
  // mu_k evenly spaced on [0, dmax].
  Var rbf_bias(Var dist, Var w, double width, double dmax);
  Var cross3(Var a, Var b);  // 1x3 vectors
  Var transpose(Var a);
  Var trace3(Var a);
  Var clamp(Var a, double lo, double hi);
  Var sqrt(Var a);
  Var atan2(Var y, Var x);  // 1x1 scalars
  // out[n, g*c + d] = s[0,c] * coords[n,d]
  Var channel_init(Var coords, Var s);
  // out[n, 3c+d] = sum_c' M[c,c'] * a[n, 3c'+d]
  Var channel_mix(Var a, Var m);
  Var repeat_cols(Var a, int group);

  const Tensor& val(Var v) const { return nodes_[v.id].val; }
  double scalar(Var v) const { return nodes_[v.id].val(0, 0); }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  // Reverse sweep from a 1x1 loss node; accumulates into param sinks.
  void backward(Var loss);

  // Gradient of an intermediate node after backward(); empty tensor if the
  // node was not reached.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  void reset();
  std::size_t node_count() const { return used_; }

 private:
  struct Node {
    Op op = Op::kInput;
    std::int32_t a = -1, b = -1;
    int i0 = 0, i1 = 0;
    double x0 = 0.0, x1 = 0.0;
    int aux = 0, aux_len = 0;
    double* sink = nullptr;
    bool needs_grad = false;
    bool grad_live = false;
    Tensor val;
    Tensor val2;
    Tensor grad;
  };

  Node& fresh(Op op, std::int32_t a, std::int32_t b);
  Var finish(Node& n);
  int push_aux(std::span<const int> ids);
  void ensure_shape(Tensor& t, std::int64_t r, std::int64_t c);
  Tensor& grad_buf(std::int32_t id);
  void exec(Node& n);
  void pull(Node& n);

  std::vector<Node> nodes_;
  std::vector<int> aux_;
  std::size_t used_ = 0;
};

}  // namespace framediff::ad
