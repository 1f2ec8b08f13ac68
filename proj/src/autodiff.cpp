#include "framediff/autodiff.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "framediff/errors.hpp"
#include "framediff/kernels.hpp"

namespace framediff::ad {

namespace {
thread_local std::vector<double> t_scratch;
thread_local std::vector<int> t_order;

double sorted_sum(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}
}  // namespace

Tape::Node& Tape::fresh(Op op, std::int32_t a, std::int32_t b) {
  if (used_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[used_];
  n.op = op;
  n.a = a;
  n.b = b;
  n.i0 = n.i1 = 0;
  n.x0 = n.x1 = 0.0;
  n.aux = n.aux_len = 0;
  n.sink = nullptr;
  n.needs_grad = false;
  n.grad_live = false;
  return n;
}

Var Tape::finish(Node& n) {
  if (n.op == Op::kParam) {
    n.needs_grad = true;
  } else if (n.op != Op::kInput) {
    bool ng = false;
    if (n.a >= 0) ng = ng || nodes_[n.a].needs_grad;
    if (n.b >= 0) ng = ng || nodes_[n.b].needs_grad;
    if (n.op == Op::kConcatColsList || n.op == Op::kConcatRowsList ||
        n.op == Op::kMeanManySorted) {
      for (int i = 0; i < n.aux_len; ++i)
        ng = ng || nodes_[aux_[n.aux + i]].needs_grad;
    }
    n.needs_grad = ng;
  }
  exec(n);
  return Var{static_cast<std::int32_t>(used_++)};
}

int Tape::push_aux(std::span<const int> ids) {
  const int off = static_cast<int>(aux_.size());
  aux_.insert(aux_.end(), ids.begin(), ids.end());
  return off;
}

void Tape::ensure_shape(Tensor& t, std::int64_t r, std::int64_t c) {
  if (t.rows() != r || t.cols() != c) t.reshape_to(r, c);
}

void Tape::reset() {
  used_ = 0;
  aux_.clear();
}

Var Tape::input(const Tensor& v) {
  Node& n = fresh(Op::kInput, -1, -1);
  n.val = v;
  return finish(n);
}

Var Tape::param(const Tensor& value, double* grad_sink) {
  Node& n = fresh(Op::kParam, -1, -1);
  n.val = value;
  n.sink = grad_sink;
  return finish(n);
}

Var Tape::add(Var a, Var b) { return finish(fresh(Op::kAdd, a.id, b.id)); }
Var Tape::sub(Var a, Var b) { return finish(fresh(Op::kSub, a.id, b.id)); }
Var Tape::mul(Var a, Var b) { return finish(fresh(Op::kMul, a.id, b.id)); }

Var Tape::scale(Var a, double s) {
  Node& n = fresh(Op::kScale, a.id, -1);
  n.x0 = s;
  return finish(n);
}

Var Tape::add_const(Var a, double c) {
  Node& n = fresh(Op::kAddConst, a.id, -1);
  n.x0 = c;
  return finish(n);
}

Var Tape::mul_scalar_var(Var a, Var s) {
  return finish(fresh(Op::kMulScalarVar, a.id, s.id));
}
Var Tape::div_by_scalar_var(Var a, Var s) {
  return finish(fresh(Op::kDivByScalarVar, a.id, s.id));
}
Var Tape::matmul(Var a, Var b) {
  return finish(fresh(Op::kMatmulNN, a.id, b.id));
}
Var Tape::matmul_tn(Var a, Var b) {
  return finish(fresh(Op::kMatmulTN, a.id, b.id));
}
Var Tape::matmul_nt(Var a, Var b) {
  return finish(fresh(Op::kMatmulNT, a.id, b.id));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  static thread_local std::vector<int> ids;
  ids.clear();
  for (Var v : parts) ids.push_back(v.id);
  Node& n = fresh(Op::kConcatColsList, -1, -1);
  n.aux = push_aux(ids);
  n.aux_len = static_cast<int>(ids.size());
  return finish(n);
}

Var Tape::concat_rows(std::span<const Var> parts) {
  static thread_local std::vector<int> ids;
  ids.clear();
  for (Var v : parts) ids.push_back(v.id);
  Node& n = fresh(Op::kConcatRowsList, -1, -1);
  n.aux = push_aux(ids);
  n.aux_len = static_cast<int>(ids.size());
  return finish(n);
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  Node& n = fresh(Op::kSliceCols, a.id, -1);
  n.i0 = c0;
  n.i1 = c1;
  return finish(n);
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  Node& n = fresh(Op::kSliceRows, a.id, -1);
  n.i0 = r0;
  n.i1 = r1;
  return finish(n);
}

Var Tape::sum_all(Var a) { return finish(fresh(Op::kSumAll, a.id, -1)); }

Var Tape::mean_many_sorted(std::span<const Var> parts) {
  static thread_local std::vector<int> ids;
  ids.clear();
  for (Var v : parts) ids.push_back(v.id);
  Node& n = fresh(Op::kMeanManySorted, -1, -1);
  n.aux = push_aux(ids);
  n.aux_len = static_cast<int>(ids.size());
  return finish(n);
}

Var Tape::seg_sum_sorted(Var a, std::span<const int> seg_ids, int n_segments) {
  Node& n = fresh(Op::kSegSumSorted, a.id, -1);
  n.aux = push_aux(seg_ids);
  n.aux_len = static_cast<int>(seg_ids.size());
  n.i0 = n_segments;
  return finish(n);
}

Var Tape::gather_rows(Var a, std::span<const int> indices) {
  Node& n = fresh(Op::kGatherRows, a.id, -1);
  n.aux = push_aux(indices);
  n.aux_len = static_cast<int>(indices.size());
  return finish(n);
}

Var Tape::silu(Var a) { return finish(fresh(Op::kSilu, a.id, -1)); }

Var Tape::layer_norm_rows(Var a, double eps) {
  Node& n = fresh(Op::kLayerNormRow, a.id, -1);
  n.x0 = eps;
  return finish(n);
}

Var Tape::softmax_rows(Var a) {
  return finish(fresh(Op::kSoftmaxRow, a.id, -1));
}

Var Tape::sqnorm_groups(Var a, int group) {
  Node& n = fresh(Op::kSqnormGroups, a.id, -1);
  n.i0 = group;
  return finish(n);
}

Var Tape::mul_row_bc(Var a, Var row) {
  return finish(fresh(Op::kMulRowBc, a.id, row.id));
}
Var Tape::add_row_bc(Var a, Var row) {
  return finish(fresh(Op::kAddRowBc, a.id, row.id));
}
Var Tape::mul_col_bc(Var a, Var col) {
  return finish(fresh(Op::kMulColBc, a.id, col.id));
}

Var Tape::center_rows(Var a, std::span<const int> live_rows) {
  Node& n = fresh(Op::kCenterRows, a.id, -1);
  n.aux = push_aux(live_rows);
  n.aux_len = static_cast<int>(live_rows.size());
  return finish(n);
}

Var Tape::pdist(Var coords) { return finish(fresh(Op::kPdist, coords.id, -1)); }

Var Tape::rbf_bias(Var dist, Var w, double width, double dmax) {
  Node& n = fresh(Op::kRbfBias, dist.id, w.id);
  n.x0 = width;
  n.x1 = dmax;
  return finish(n);
}

Var Tape::cross3(Var a, Var b) { return finish(fresh(Op::kCross3, a.id, b.id)); }
Var Tape::transpose(Var a) { return finish(fresh(Op::kTranspose, a.id, -1)); }
Var Tape::trace3(Var a) { return finish(fresh(Op::kTrace3, a.id, -1)); }

Var Tape::clamp(Var a, double lo, double hi) {
  Node& n = fresh(Op::kClamp, a.id, -1);
  n.x0 = lo;
  n.x1 = hi;
  return finish(n);
}

Var Tape::sqrt(Var a) { return finish(fresh(Op::kSqrt, a.id, -1)); }
Var Tape::atan2(Var y, Var x) { return finish(fresh(Op::kAtan2, y.id, x.id)); }

Var Tape::channel_init(Var coords, Var s) {
  return finish(fresh(Op::kChannelInit, coords.id, s.id));
}
Var Tape::channel_mix(Var a, Var m) {
  return finish(fresh(Op::kChannelMix, a.id, m.id));
}

Var Tape::repeat_cols(Var a, int group) {
  Node& n = fresh(Op::kRepeatCols, a.id, -1);
  n.i0 = group;
  return finish(n);
}

void Tape::exec(Node& n) {
  const auto& K = kern::active();
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
      break;
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      assert(a.same_shape(b));
      ensure_shape(n.val, a.rows(), a.cols());
      if (n.op == Op::kAdd)
        K.add(a.size(), a.data(), b.data(), n.val.data());
      else if (n.op == Op::kSub)
        K.sub(a.size(), a.data(), b.data(), n.val.data());
      else
        K.mul(a.size(), a.data(), b.data(), n.val.data());
      break;
    }
    case Op::kScale: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), a.cols());
      K.scale(a.size(), n.x0, a.data(), n.val.data());
      break;
    }
    case Op::kAddConst: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i)
        n.val.data()[i] = a.data()[i] + n.x0;
      break;
    }
    case Op::kMulScalarVar: {
      const Tensor& a = nodes_[n.a].val;
      const double s = nodes_[n.b].val(0, 0);
      ensure_shape(n.val, a.rows(), a.cols());
      K.scale(a.size(), s, a.data(), n.val.data());
      break;
    }
    case Op::kDivByScalarVar: {
      const Tensor& a = nodes_[n.a].val;
      const double s = nodes_[n.b].val(0, 0);
      ensure_shape(n.val, a.rows(), a.cols());
      K.scale(a.size(), 1.0 / s, a.data(), n.val.data());
      break;
    }
    case Op::kMatmulNN: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      assert(a.cols() == b.rows());
      ensure_shape(n.val, a.rows(), b.cols());
      K.gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), n.val.data(),
                false);
      break;
    }
    case Op::kMatmulTN: {
      const Tensor& a = nodes_[n.a].val;  // [k, m]
      const Tensor& b = nodes_[n.b].val;  // [k, n]
      assert(a.rows() == b.rows());
      ensure_shape(n.val, a.cols(), b.cols());
      K.gemm_tn(a.cols(), b.cols(), a.rows(), a.data(), b.data(), n.val.data(),
                false);
      break;
    }
    case Op::kMatmulNT: {
      const Tensor& a = nodes_[n.a].val;  // [m, k]
      const Tensor& b = nodes_[n.b].val;  // [n, k]
      assert(a.cols() == b.cols());
      ensure_shape(n.val, a.rows(), b.rows());
      K.gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), b.data(), n.val.data(),
                false);
      break;
    }
    case Op::kConcatColsList: {
      std::int64_t cols = 0;
      const std::int64_t rows = nodes_[aux_[n.aux]].val.rows();
      for (int i = 0; i < n.aux_len; ++i) {
        const Tensor& p = nodes_[aux_[n.aux + i]].val;
        assert(p.rows() == rows);
        cols += p.cols();
      }
      ensure_shape(n.val, rows, cols);
      std::int64_t off = 0;
      for (int i = 0; i < n.aux_len; ++i) {
        const Tensor& p = nodes_[aux_[n.aux + i]].val;
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < p.cols(); ++c)
            n.val(r, off + c) = p(r, c);
        off += p.cols();
      }
      break;
    }
    case Op::kConcatRowsList: {
      std::int64_t rows = 0;
      const std::int64_t cols = nodes_[aux_[n.aux]].val.cols();
      for (int i = 0; i < n.aux_len; ++i) {
        const Tensor& p = nodes_[aux_[n.aux + i]].val;
        assert(p.cols() == cols);
        rows += p.rows();
      }
      ensure_shape(n.val, rows, cols);
      std::int64_t off = 0;
      for (int i = 0; i < n.aux_len; ++i) {
        const Tensor& p = nodes_[aux_[n.aux + i]].val;
        for (std::int64_t r = 0; r < p.rows(); ++r)
          for (std::int64_t c = 0; c < cols; ++c) n.val(off + r, c) = p(r, c);
        off += p.rows();
      }
      break;
    }
    case Op::kSliceCols: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), n.i1 - n.i0);
      for (std::int64_t r = 0; r < a.rows(); ++r)
        for (int c = n.i0; c < n.i1; ++c) n.val(r, c - n.i0) = a(r, c);
      break;
    }
    case Op::kSliceRows: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, n.i1 - n.i0, a.cols());
      for (int r = n.i0; r < n.i1; ++r)
        for (std::int64_t c = 0; c < a.cols(); ++c) n.val(r - n.i0, c) = a(r, c);
      break;
    }
    case Op::kSumAll: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, 1, 1);
      n.val(0, 0) = K.sum(a.size(), a.data());
      break;
    }
    case Op::kMeanManySorted: {
      const Tensor& first = nodes_[aux_[n.aux]].val;
      ensure_shape(n.val, first.rows(), first.cols());
      const double inv = 1.0 / static_cast<double>(n.aux_len);
      for (std::size_t e = 0; e < first.size(); ++e) {
        t_scratch.clear();
        for (int i = 0; i < n.aux_len; ++i)
          t_scratch.push_back(nodes_[aux_[n.aux + i]].val.data()[e]);
        n.val.data()[e] = sorted_sum(t_scratch) * inv;
      }
      break;
    }
    case Op::kSegSumSorted: {
      const Tensor& a = nodes_[n.a].val;
      const std::int64_t cols = a.cols();
      ensure_shape(n.val, n.i0, cols);
      n.val.fill(0.0);
      for (int s = 0; s < n.i0; ++s) {
        t_order.clear();
        for (int j = 0; j < n.aux_len; ++j)
          if (aux_[n.aux + j] == s) t_order.push_back(j);
        if (t_order.empty()) continue;
        for (std::int64_t c = 0; c < cols; ++c) {
          t_scratch.clear();
          for (int j : t_order) t_scratch.push_back(a(j, c));
          n.val(s, c) = sorted_sum(t_scratch);
        }
      }
      break;
    }
    case Op::kGatherRows: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, n.aux_len, a.cols());
      for (int r = 0; r < n.aux_len; ++r) {
        const double* src = a.row(aux_[n.aux + r]);
        double* dst = n.val.row(r);
        for (std::int64_t c = 0; c < a.cols(); ++c) dst[c] = src[c];
      }
      break;
    }
    case Op::kSilu: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), a.cols());
      ensure_shape(n.val2, a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        n.val2.data()[i] = s;
        n.val.data()[i] = x * s;
      }
      break;
    }
    case Op::kLayerNormRow: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), a.cols());
      ensure_shape(n.val2, a.rows(), 2);
      const double invc = 1.0 / static_cast<double>(a.cols());
      for (std::int64_t r = 0; r < a.rows(); ++r) {
        const double* x = a.row(r);
        double mean = 0.0;
        for (std::int64_t c = 0; c < a.cols(); ++c) mean += x[c];
        mean *= invc;
        double var = 0.0;
        for (std::int64_t c = 0; c < a.cols(); ++c) {
          const double d = x[c] - mean;
          var += d * d;
        }
        var *= invc;
        const double rstd = 1.0 / std::sqrt(var + n.x0);
        n.val2(r, 0) = mean;
        n.val2(r, 1) = rstd;
        double* y = n.val.row(r);
        for (std::int64_t c = 0; c < a.cols(); ++c) y[c] = (x[c] - mean) * rstd;
      }
      break;
    }
    case Op::kSoftmaxRow: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), a.cols());
      for (std::int64_t r = 0; r < a.rows(); ++r) {
        const double* x = a.row(r);
        double m = x[0];
        for (std::int64_t c = 1; c < a.cols(); ++c) m = std::max(m, x[c]);
        double s = 0.0;
        double* y = n.val.row(r);
        for (std::int64_t c = 0; c < a.cols(); ++c) {
          y[c] = std::exp(x[c] - m);
          s += y[c];
        }
        const double inv = 1.0 / s;
        for (std::int64_t c = 0; c < a.cols(); ++c) y[c] *= inv;
      }
      break;
    }
    case Op::kSqnormGroups: {
      const Tensor& a = nodes_[n.a].val;
      const int g = n.i0;
      const std::int64_t groups = a.cols() / g;
      ensure_shape(n.val, a.rows(), groups);
      for (std::int64_t r = 0; r < a.rows(); ++r)
        for (std::int64_t c = 0; c < groups; ++c) {
          double s = 0.0;
          for (int d = 0; d < g; ++d) {
            const double x = a(r, c * g + d);
            s += x * x;
          }
          n.val(r, c) = s;
        }
      break;
    }
    case Op::kMulRowBc: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      ensure_shape(n.val, a.rows(), a.cols());
      for (std::int64_t r = 0; r < a.rows(); ++r)
        K.mul(a.cols(), a.row(r), b.data(), n.val.row(r));
      break;
    }
    case Op::kAddRowBc: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      ensure_shape(n.val, a.rows(), a.cols());
      for (std::int64_t r = 0; r < a.rows(); ++r)
        K.add(a.cols(), a.row(r), b.data(), n.val.row(r));
      break;
    }
    case Op::kMulColBc: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      ensure_shape(n.val, a.rows(), a.cols());
      for (std::int64_t r = 0; r < a.rows(); ++r)
        K.scale(a.cols(), b(r, 0), a.row(r), n.val.row(r));
      break;
    }
    case Op::kCenterRows: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), a.cols());
      n.val = a;
      if (n.aux_len == 0) break;
      const double inv = 1.0 / static_cast<double>(n.aux_len);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::int64_t c = 0; c < a.cols(); ++c) {
          t_scratch.clear();
          for (int i = 0; i < n.aux_len; ++i)
            t_scratch.push_back(n.val(aux_[n.aux + i], c));
          const double mean = sorted_sum(t_scratch) * inv;
          for (int i = 0; i < n.aux_len; ++i) n.val(aux_[n.aux + i], c) -= mean;
        }
      }
      break;
    }
    case Op::kPdist: {
      const Tensor& a = nodes_[n.a].val;
      const std::int64_t N = a.rows();
      ensure_shape(n.val, N, N);
      for (std::int64_t i = 0; i < N; ++i) {
        n.val(i, i) = 0.0;
        for (std::int64_t j = i + 1; j < N; ++j) {
          const double dx = a(i, 0) - a(j, 0);
          const double dy = a(i, 1) - a(j, 1);
          const double dz = a(i, 2) - a(j, 2);
          const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
          n.val(i, j) = d;
          n.val(j, i) = d;
        }
      }
      break;
    }
    case Op::kRbfBias: {
      const Tensor& d = nodes_[n.a].val;
      const Tensor& w = nodes_[n.b].val;
      const int K_rbf = static_cast<int>(w.cols());
      const double step = n.x1 / static_cast<double>(K_rbf - 1);
      const double inv2w2 = 1.0 / (2.0 * n.x0 * n.x0);
      ensure_shape(n.val, d.rows(), d.cols());
      for (std::size_t e = 0; e < d.size(); ++e) {
        const double dist = d.data()[e];
        double s = 0.0;
        for (int k = 0; k < K_rbf; ++k) {
          const double dd = dist - step * k;
          s += w.data()[k] * std::exp(-dd * dd * inv2w2);
        }
        n.val.data()[e] = s;
      }
      break;
    }
    case Op::kCross3: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      ensure_shape(n.val, 1, 3);
      n.val(0, 0) = a(0, 1) * b(0, 2) - a(0, 2) * b(0, 1);
      n.val(0, 1) = a(0, 2) * b(0, 0) - a(0, 0) * b(0, 2);
      n.val(0, 2) = a(0, 0) * b(0, 1) - a(0, 1) * b(0, 0);
      break;
    }
    case Op::kTranspose: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.cols(), a.rows());
      for (std::int64_t r = 0; r < a.rows(); ++r)
        for (std::int64_t c = 0; c < a.cols(); ++c) n.val(c, r) = a(r, c);
      break;
    }
    case Op::kTrace3: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, 1, 1);
      n.val(0, 0) = a(0, 0) + a(1, 1) + a(2, 2);
      break;
    }
    case Op::kClamp: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i)
        n.val.data()[i] = std::clamp(a.data()[i], n.x0, n.x1);
      break;
    }
    case Op::kSqrt: {
      const Tensor& a = nodes_[n.a].val;
      ensure_shape(n.val, a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i)
        n.val.data()[i] = std::sqrt(a.data()[i]);
      break;
    }
    case Op::kAtan2: {
      ensure_shape(n.val, 1, 1);
      n.val(0, 0) = std::atan2(nodes_[n.a].val(0, 0), nodes_[n.b].val(0, 0));
      break;
    }
    case Op::kChannelInit: {
      const Tensor& x = nodes_[n.a].val;  // N x 3
      const Tensor& s = nodes_[n.b].val;  // 1 x C
      const std::int64_t C = s.cols();
      ensure_shape(n.val, x.rows(), C * 3);
      for (std::int64_t r = 0; r < x.rows(); ++r)
        for (std::int64_t c = 0; c < C; ++c)
          for (int d = 0; d < 3; ++d)
            n.val(r, c * 3 + d) = s(0, c) * x(r, d);
      break;
    }
    case Op::kChannelMix: {
      const Tensor& x = nodes_[n.a].val;  // N x 3C
      const Tensor& m = nodes_[n.b].val;  // C x C
      const std::int64_t C = m.rows();
      ensure_shape(n.val, x.rows(), x.cols());
      for (std::int64_t r = 0; r < x.rows(); ++r)
        for (std::int64_t c = 0; c < C; ++c)
          for (int d = 0; d < 3; ++d) {
            double s = 0.0;
            for (std::int64_t c2 = 0; c2 < C; ++c2)
              s += m(c, c2) * x(r, c2 * 3 + d);
            n.val(r, c * 3 + d) = s;
          }
      break;
    }
    case Op::kRepeatCols: {
      const Tensor& a = nodes_[n.a].val;
      const int g = n.i0;
      ensure_shape(n.val, a.rows(), a.cols() * g);
      for (std::int64_t r = 0; r < a.rows(); ++r)
        for (std::int64_t c = 0; c < a.cols(); ++c)
          for (int d = 0; d < g; ++d) n.val(r, c * g + d) = a(r, c);
      break;
    }
  }
}

Tensor& Tape::grad_buf(std::int32_t id) {
  Node& p = nodes_[id];
  if (!p.grad_live) {
    ensure_shape(p.grad, p.val.rows(), p.val.cols());
    p.grad.fill(0.0);
    p.grad_live = true;
  }
  return p.grad;
}

void Tape::backward(Var loss) {
  Node& ln = nodes_[loss.id];
  if (ln.val.rows() != 1 || ln.val.cols() != 1)
    throw Error("backward: loss must be a 1x1 node");
  for (std::size_t i = 0; i <= static_cast<std::size_t>(loss.id); ++i)
    nodes_[i].grad_live = false;
  grad_buf(loss.id)(0, 0) = 1.0;
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || !n.grad_live) continue;
    if (n.op == Op::kParam) {
      const auto& K = kern::active();
      K.axpy(n.grad.size(), 1.0, n.grad.data(), n.sink);
      continue;
    }
    pull(n);
  }
}

void Tape::pull(Node& n) {
  const auto& K = kern::active();
  const Tensor& g = n.grad;
  auto want = [&](std::int32_t id) {
    return id >= 0 && nodes_[id].needs_grad;
  };
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
      break;
    case Op::kAdd: {
      if (want(n.a)) K.axpy(g.size(), 1.0, g.data(), grad_buf(n.a).data());
      if (want(n.b)) K.axpy(g.size(), 1.0, g.data(), grad_buf(n.b).data());
      break;
    }
    case Op::kSub: {
      if (want(n.a)) K.axpy(g.size(), 1.0, g.data(), grad_buf(n.a).data());
      if (want(n.b)) K.axpy(g.size(), -1.0, g.data(), grad_buf(n.b).data());
      break;
    }
    case Op::kMul: {
      if (want(n.a)) {
        Tensor& da = grad_buf(n.a);
        const Tensor& b = nodes_[n.b].val;
        for (std::size_t i = 0; i < g.size(); ++i)
          da.data()[i] += g.data()[i] * b.data()[i];
      }
      if (want(n.b)) {
        Tensor& db = grad_buf(n.b);
        const Tensor& a = nodes_[n.a].val;
        for (std::size_t i = 0; i < g.size(); ++i)
          db.data()[i] += g.data()[i] * a.data()[i];
      }
      break;
    }
    case Op::kScale:
      if (want(n.a)) K.axpy(g.size(), n.x0, g.data(), grad_buf(n.a).data());
      break;
    case Op::kAddConst:
      if (want(n.a)) K.axpy(g.size(), 1.0, g.data(), grad_buf(n.a).data());
      break;
    case Op::kMulScalarVar: {
      const double s = nodes_[n.b].val(0, 0);
      if (want(n.a)) K.axpy(g.size(), s, g.data(), grad_buf(n.a).data());
      if (want(n.b))
        grad_buf(n.b)(0, 0) +=
            K.dot(g.size(), g.data(), nodes_[n.a].val.data());
      break;
    }
    case Op::kDivByScalarVar: {
      const double s = nodes_[n.b].val(0, 0);
      if (want(n.a)) K.axpy(g.size(), 1.0 / s, g.data(), grad_buf(n.a).data());
      if (want(n.b))
        grad_buf(n.b)(0, 0) -=
            K.dot(g.size(), g.data(), n.val.data()) / s;
      break;
    }
    case Op::kMatmulNN: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      if (want(n.a))
        K.gemm_nt(a.rows(), a.cols(), b.cols(), g.data(), b.data(),
                  grad_buf(n.a).data(), true);
      if (want(n.b))
        K.gemm_tn(b.rows(), b.cols(), a.rows(), a.data(), g.data(),
                  grad_buf(n.b).data(), true);
      break;
    }
    case Op::kMatmulTN: {
      const Tensor& a = nodes_[n.a].val;  // [k, m]
      const Tensor& b = nodes_[n.b].val;  // [k, n]
      if (want(n.a))
        K.gemm_nt(a.rows(), a.cols(), b.cols(), b.data(), g.data(),
                  grad_buf(n.a).data(), true);
      if (want(n.b))
        K.gemm_nn(b.rows(), b.cols(), a.cols(), a.data(), g.data(),
                  grad_buf(n.b).data(), true);
      break;
    }
    case Op::kMatmulNT: {
      const Tensor& a = nodes_[n.a].val;  // [m, k]
      const Tensor& b = nodes_[n.b].val;  // [n, k]
      if (want(n.a))
        K.gemm_nn(a.rows(), a.cols(), b.rows(), g.data(), b.data(),
                  grad_buf(n.a).data(), true);
      if (want(n.b))
        K.gemm_tn(b.rows(), b.cols(), a.rows(), g.data(), a.data(),
                  grad_buf(n.b).data(), true);
      break;
    }
    case Op::kConcatColsList: {
      std::int64_t off = 0;
      for (int i = 0; i < n.aux_len; ++i) {
        const std::int32_t pid = aux_[n.aux + i];
        const Tensor& p = nodes_[pid].val;
        if (want(pid)) {
          Tensor& dp = grad_buf(pid);
          for (std::int64_t r = 0; r < p.rows(); ++r)
            for (std::int64_t c = 0; c < p.cols(); ++c)
              dp(r, c) += g(r, off + c);
        }
        off += p.cols();
      }
      break;
    }
    case Op::kConcatRowsList: {
      std::int64_t off = 0;
      for (int i = 0; i < n.aux_len; ++i) {
        const std::int32_t pid = aux_[n.aux + i];
        const Tensor& p = nodes_[pid].val;
        if (want(pid)) {
          Tensor& dp = grad_buf(pid);
          K.axpy(p.size(), 1.0, g.row(off), dp.data());
        }
        off += p.rows();
      }
      break;
    }
    case Op::kSliceCols: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      for (std::int64_t r = 0; r < g.rows(); ++r)
        for (std::int64_t c = 0; c < g.cols(); ++c)
          da(r, n.i0 + c) += g(r, c);
      break;
    }
    case Op::kSliceRows: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      K.axpy(g.size(), 1.0, g.data(), da.row(n.i0));
      break;
    }
    case Op::kSumAll: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      const double gs = g(0, 0);
      for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] += gs;
      break;
    }
    case Op::kMeanManySorted: {
      const double inv = 1.0 / static_cast<double>(n.aux_len);
      for (int i = 0; i < n.aux_len; ++i) {
        const std::int32_t pid = aux_[n.aux + i];
        if (want(pid))
          K.axpy(g.size(), inv, g.data(), grad_buf(pid).data());
      }
      break;
    }
    case Op::kSegSumSorted: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      for (int j = 0; j < n.aux_len; ++j)
        K.axpy(g.cols(), 1.0, g.row(aux_[n.aux + j]), da.row(j));
      break;
    }
    case Op::kGatherRows: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      for (int r = 0; r < n.aux_len; ++r)
        K.axpy(g.cols(), 1.0, g.row(r), da.row(aux_[n.aux + r]));
      break;
    }
    case Op::kSilu: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      const Tensor& x = nodes_[n.a].val;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = n.val2.data()[i];
        da.data()[i] +=
            g.data()[i] * (s + x.data()[i] * s * (1.0 - s));
      }
      break;
    }
    case Op::kLayerNormRow: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      const std::int64_t C = g.cols();
      const double invc = 1.0 / static_cast<double>(C);
      for (std::int64_t r = 0; r < g.rows(); ++r) {
        const double rstd = n.val2(r, 1);
        const double* gr = g.row(r);
        const double* yr = n.val.row(r);
        double mg = 0.0, mgy = 0.0;
        for (std::int64_t c = 0; c < C; ++c) {
          mg += gr[c];
          mgy += gr[c] * yr[c];
        }
        mg *= invc;
        mgy *= invc;
        double* dar = da.row(r);
        for (std::int64_t c = 0; c < C; ++c)
          dar[c] += rstd * (gr[c] - mg - yr[c] * mgy);
      }
      break;
    }
    case Op::kSoftmaxRow: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      for (std::int64_t r = 0; r < g.rows(); ++r) {
        const double* gr = g.row(r);
        const double* pr = n.val.row(r);
        double dotgp = 0.0;
        for (std::int64_t c = 0; c < g.cols(); ++c) dotgp += gr[c] * pr[c];
        double* dar = da.row(r);
        for (std::int64_t c = 0; c < g.cols(); ++c)
          dar[c] += pr[c] * (gr[c] - dotgp);
      }
      break;
    }
    case Op::kSqnormGroups: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      const Tensor& a = nodes_[n.a].val;
      const int grp = n.i0;
      for (std::int64_t r = 0; r < g.rows(); ++r)
        for (std::int64_t c = 0; c < g.cols(); ++c) {
          const double gc = 2.0 * g(r, c);
          for (int d = 0; d < grp; ++d)
            da(r, c * grp + d) += gc * a(r, c * grp + d);
        }
      break;
    }
    case Op::kMulRowBc: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      if (want(n.a)) {
        Tensor& da = grad_buf(n.a);
        for (std::int64_t r = 0; r < g.rows(); ++r)
          for (std::int64_t c = 0; c < g.cols(); ++c)
            da(r, c) += g(r, c) * b(0, c);
      }
      if (want(n.b)) {
        Tensor& db = grad_buf(n.b);
        for (std::int64_t r = 0; r < g.rows(); ++r)
          for (std::int64_t c = 0; c < g.cols(); ++c)
            db(0, c) += g(r, c) * a(r, c);
      }
      break;
    }
    case Op::kAddRowBc: {
      if (want(n.a)) K.axpy(g.size(), 1.0, g.data(), grad_buf(n.a).data());
      if (want(n.b)) {
        Tensor& db = grad_buf(n.b);
        for (std::int64_t r = 0; r < g.rows(); ++r)
          K.axpy(g.cols(), 1.0, g.row(r), db.data());
      }
      break;
    }
    case Op::kMulColBc: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      if (want(n.a)) {
        Tensor& da = grad_buf(n.a);
        for (std::int64_t r = 0; r < g.rows(); ++r)
          K.axpy(g.cols(), b(r, 0), g.row(r), da.row(r));
      }
      if (want(n.b)) {
        Tensor& db = grad_buf(n.b);
        for (std::int64_t r = 0; r < g.rows(); ++r)
          db(r, 0) += K.dot(g.cols(), g.row(r), a.row(r));
      }
      break;
    }
    case Op::kCenterRows: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      K.axpy(g.size(), 1.0, g.data(), da.data());
      if (n.aux_len == 0) break;
      const double inv = 1.0 / static_cast<double>(n.aux_len);
      for (std::int64_t c = 0; c < g.cols(); ++c) {
        t_scratch.clear();
        for (int i = 0; i < n.aux_len; ++i)
          t_scratch.push_back(g(aux_[n.aux + i], c));
        const double mean = sorted_sum(t_scratch) * inv;
        for (int i = 0; i < n.aux_len; ++i) da(aux_[n.aux + i], c) -= mean;
      }
      break;
    }
    case Op::kPdist: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      const Tensor& a = nodes_[n.a].val;
      const std::int64_t N = a.rows();
      for (std::int64_t i = 0; i < N; ++i)
        for (std::int64_t j = 0; j < N; ++j) {
          if (i == j) continue;
          const double d = n.val(i, j);
          if (d < 1e-12) continue;
          const double coef = g(i, j) / d;
          for (int k = 0; k < 3; ++k) {
            const double diff = a(i, k) - a(j, k);
            da(i, k) += coef * diff;
            da(j, k) -= coef * diff;
          }
        }
      break;
    }
    case Op::kRbfBias: {
      const Tensor& d = nodes_[n.a].val;
      const Tensor& w = nodes_[n.b].val;
      const int K_rbf = static_cast<int>(w.cols());
      const double step = n.x1 / static_cast<double>(K_rbf - 1);
      const double inv2w2 = 1.0 / (2.0 * n.x0 * n.x0);
      const bool wa = want(n.a), wb = want(n.b);
      if (!wa && !wb) break;
      Tensor* da = wa ? &grad_buf(n.a) : nullptr;
      Tensor* db = wb ? &grad_buf(n.b) : nullptr;
      for (std::size_t e = 0; e < d.size(); ++e) {
        const double ge = g.data()[e];
        if (ge == 0.0) continue;
        const double dist = d.data()[e];
        double dgrad = 0.0;
        for (int k = 0; k < K_rbf; ++k) {
          const double dd = dist - step * k;
          const double rbf = std::exp(-dd * dd * inv2w2);
          if (wb) db->data()[k] += ge * rbf;
          if (wa) dgrad += w.data()[k] * rbf * (-2.0 * dd * inv2w2);
        }
        if (wa) da->data()[e] += ge * dgrad;
      }
      break;
    }
    case Op::kCross3: {
      const Tensor& a = nodes_[n.a].val;
      const Tensor& b = nodes_[n.b].val;
      auto cr = [](const double* u, const double* v, double* out) {
        out[0] += u[1] * v[2] - u[2] * v[1];
        out[1] += u[2] * v[0] - u[0] * v[2];
        out[2] += u[0] * v[1] - u[1] * v[0];
      };
      if (want(n.a)) cr(b.data(), g.data(), grad_buf(n.a).data());
      if (want(n.b)) cr(g.data(), a.data(), grad_buf(n.b).data());
      break;
    }
    case Op::kTranspose: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      for (std::int64_t r = 0; r < g.rows(); ++r)
        for (std::int64_t c = 0; c < g.cols(); ++c) da(c, r) += g(r, c);
      break;
    }
    case Op::kTrace3: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      const double gs = g(0, 0);
      da(0, 0) += gs;
      da(1, 1) += gs;
      da(2, 2) += gs;
      break;
    }
    case Op::kClamp: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      const Tensor& a = nodes_[n.a].val;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = a.data()[i];
        if (x > n.x0 && x < n.x1) da.data()[i] += g.data()[i];
      }
      break;
    }
    case Op::kSqrt: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = n.val.data()[i];
        if (y > 0.0) da.data()[i] += g.data()[i] * 0.5 / y;
      }
      break;
    }
    case Op::kAtan2: {
      const double y = nodes_[n.a].val(0, 0);
      const double x = nodes_[n.b].val(0, 0);
      const double denom = x * x + y * y;
      if (denom == 0.0) break;
      const double gs = g(0, 0);
      if (want(n.a)) grad_buf(n.a)(0, 0) += gs * x / denom;
      if (want(n.b)) grad_buf(n.b)(0, 0) -= gs * y / denom;
      break;
    }
    case Op::kChannelInit: {
      const Tensor& x = nodes_[n.a].val;
      const Tensor& s = nodes_[n.b].val;
      const std::int64_t C = s.cols();
      if (want(n.a)) {
        Tensor& dx = grad_buf(n.a);
        for (std::int64_t r = 0; r < x.rows(); ++r)
          for (int d = 0; d < 3; ++d) {
            double acc = 0.0;
            for (std::int64_t c = 0; c < C; ++c)
              acc += g(r, c * 3 + d) * s(0, c);
            dx(r, d) += acc;
          }
      }
      if (want(n.b)) {
        Tensor& ds = grad_buf(n.b);
        for (std::int64_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::int64_t r = 0; r < x.rows(); ++r)
            for (int d = 0; d < 3; ++d) acc += g(r, c * 3 + d) * x(r, d);
          ds(0, c) += acc;
        }
      }
      break;
    }
    case Op::kChannelMix: {
      const Tensor& x = nodes_[n.a].val;
      const Tensor& m = nodes_[n.b].val;
      const std::int64_t C = m.rows();
      if (want(n.a)) {
        Tensor& dx = grad_buf(n.a);
        for (std::int64_t r = 0; r < x.rows(); ++r)
          for (std::int64_t c2 = 0; c2 < C; ++c2)
            for (int d = 0; d < 3; ++d) {
              double acc = 0.0;
              for (std::int64_t c = 0; c < C; ++c)
                acc += m(c, c2) * g(r, c * 3 + d);
              dx(r, c2 * 3 + d) += acc;
            }
      }
      if (want(n.b)) {
        Tensor& dm = grad_buf(n.b);
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t c2 = 0; c2 < C; ++c2) {
            double acc = 0.0;
            for (std::int64_t r = 0; r < x.rows(); ++r)
              for (int d = 0; d < 3; ++d)
                acc += g(r, c * 3 + d) * x(r, c2 * 3 + d);
            dm(c, c2) += acc;
          }
      }
      break;
    }
    case Op::kRepeatCols: {
      if (!want(n.a)) break;
      Tensor& da = grad_buf(n.a);
      const int grp = n.i0;
      for (std::int64_t r = 0; r < da.rows(); ++r)
        for (std::int64_t c = 0; c < da.cols(); ++c) {
          double acc = 0.0;
          for (int d = 0; d < grp; ++d) acc += g(r, c * grp + d);
          da(r, c) += acc;
        }
      break;
    }
  }
}

}  // namespace framediff::ad
