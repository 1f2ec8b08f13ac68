#include "framediff/backbone.hpp"

#include <cassert>
#include <cmath>
#include <string>

namespace framediff::backbone {

using ad::Tape;
using ad::Var;

ParamIds init_params(ParamStore& store, const Config& cfg,
                     std::mt19937_64& rng) {
  ParamIds ids;
  const int W = cfg.width;

  auto linear = [&](const std::string& name, int in, int out, double scale,
                    int& w, int& b) {
    w = store.add(name + ".w", in, out);
    fill_normal(store.at(w).value, scale / std::sqrt(in), rng);
    b = store.add(name + ".b", 1, out);
  };

  linear("bb.embed", cfg.token_dim, W, 1.0, ids.embed_w, ids.embed_b);
  linear("bb.tmlp1", cfg.t_embed_dim, W, 1.0, ids.tmlp_w1, ids.tmlp_b1);
  linear("bb.tmlp2", W, W, 1.0, ids.tmlp_w2, ids.tmlp_b2);

  ids.edge_w = store.add("bb.edge.w", 1, cfg.rbf_count);
  fill_normal(store.at(ids.edge_w).value, 0.1, rng);

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "bb.b" + std::to_string(l) + ".";
    ParamIds::Block blk;
    // adaLN-zero: modulation starts at identity, gates closed
    blk.adaln_w = store.add(p + "adaln.w", W, 6 * W);
    blk.adaln_b = store.add(p + "adaln.b", 1, 6 * W);
    linear(p + "attn.q", W, W, 1.0, blk.wq, blk.bq);
    linear(p + "attn.k", W, W, 1.0, blk.wk, blk.bk);
    linear(p + "attn.v", W, W, 1.0, blk.wv, blk.bv);
    linear(p + "attn.o", W, W, 1.0, blk.wo, blk.bo);
    blk.edge_scale = store.add(p + "attn.edge_scale", 1, cfg.heads);
    store.at(blk.edge_scale).value.fill(1.0);
    linear(p + "mlp.1", W, cfg.mlp_ratio * W, 1.0, blk.mlp_w1, blk.mlp_b1);
    linear(p + "mlp.2", cfg.mlp_ratio * W, W, 1.0, blk.mlp_w2, blk.mlp_b2);
    ids.blocks.push_back(blk);
  }

  ids.final_adaln_w = store.add("bb.final.adaln.w", W, 2 * W);
  ids.final_adaln_b = store.add("bb.final.adaln.b", 1, 2 * W);
  ids.final_w = store.add("bb.final.w", W, cfg.out_dim);
  ids.final_b = store.add("bb.final.b", 1, cfg.out_dim);
  return ids;
}

Tensor timestep_embedding(int t, int dim) {
  assert(t >= 0);
  assert(dim % 2 == 0);
  Tensor emb(1, dim);
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq =
        std::exp(-std::log(1e4) * static_cast<double>(k) / half);
    emb(0, 2 * k) = std::sin(t * freq);
    emb(0, 2 * k + 1) = std::cos(t * freq);
  }
  return emb;
}

namespace {

Tensor mask_bias_matrix(const std::vector<std::uint8_t>& mask, std::int64_t n,
                        double bias) {
  Tensor m(n, n);
  if (mask.empty()) return m;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      if (!mask[i] || !mask[j]) m(i, j) = bias;
  return m;
}

Tensor mask_column(const std::vector<std::uint8_t>& mask, std::int64_t n) {
  Tensor m = Tensor::full(n, 1, 1.0);
  for (std::int64_t i = 0; i < n && i < static_cast<std::int64_t>(mask.size());
       ++i)
    if (!mask[i]) m(i, 0) = 0.0;
  return m;
}

struct Modulated {
  Var shift, scale, gate;
};

Var modulate(Tape& t, Var x, Var shift, Var scale) {
  return t.add_row_bc(t.mul_row_bc(x, t.add_const(scale, 1.0)), shift);
}

}  // namespace

Tensor edge_bias(const Tensor& coords, const std::vector<std::uint8_t>& mask,
                 const Tensor& rbf_w, const Config& cfg) {
  Tape tape;
  Var d = tape.pdist(tape.input(coords));
  Var b = tape.rbf_bias(d, tape.input(rbf_w), cfg.rbf_width, cfg.rbf_max);
  Var out = tape.add(
      b, tape.input(mask_bias_matrix(mask, coords.rows(), cfg.mask_bias)));
  return tape.val(out);
}

Var forward(Tape& tape, Var tokens, int t,
            const std::vector<std::uint8_t>& mask, ParamBinder& bind,
            const ParamIds& ids, const Config& cfg, Variant variant) {
  const std::int64_t n = tape.val(tokens).rows();
  const int W = cfg.width;
  const int dh = W / cfg.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool masked = !mask.empty();

  Var ebias{};
  if (variant == Variant::kEdge) {
    Var coords = tape.slice_cols(tokens, 0, 3);
    Var d = tape.pdist(coords);
    ebias = tape.rbf_bias(d, bind(ids.edge_w), cfg.rbf_width, cfg.rbf_max);
  }
  Var mbias{};
  if (masked)
    mbias = tape.input(mask_bias_matrix(mask, n, cfg.mask_bias));

  Var x = tape.add_row_bc(tape.matmul(tokens, bind(ids.embed_w)),
                          bind(ids.embed_b));

  Var temb = tape.input(timestep_embedding(t, cfg.t_embed_dim));
  Var c = tape.silu(tape.add_row_bc(tape.matmul(temb, bind(ids.tmlp_w1)),
                                    bind(ids.tmlp_b1)));
  c = tape.add_row_bc(tape.matmul(c, bind(ids.tmlp_w2)), bind(ids.tmlp_b2));
  Var cond = tape.silu(c);  // 1 x W

  for (const auto& blk : ids.blocks) {
    Var mods = tape.add_row_bc(tape.matmul(cond, bind(blk.adaln_w)),
                               bind(blk.adaln_b));
    Modulated m1{tape.slice_cols(mods, 0, W), tape.slice_cols(mods, W, 2 * W),
                 tape.slice_cols(mods, 2 * W, 3 * W)};
    Modulated m2{tape.slice_cols(mods, 3 * W, 4 * W),
                 tape.slice_cols(mods, 4 * W, 5 * W),
                 tape.slice_cols(mods, 5 * W, 6 * W)};

    Var xm = modulate(tape, tape.layer_norm_rows(x), m1.shift, m1.scale);
    Var q = tape.add_row_bc(tape.matmul(xm, bind(blk.wq)), bind(blk.bq));
    Var k = tape.add_row_bc(tape.matmul(xm, bind(blk.wk)), bind(blk.bk));
    Var v = tape.add_row_bc(tape.matmul(xm, bind(blk.wv)), bind(blk.bv));

    std::vector<Var> heads;
    for (int hh = 0; hh < cfg.heads; ++hh) {
      Var qh = tape.slice_cols(q, hh * dh, (hh + 1) * dh);
      Var kh = tape.slice_cols(k, hh * dh, (hh + 1) * dh);
      Var vh = tape.slice_cols(v, hh * dh, (hh + 1) * dh);
      Var logits = tape.scale(tape.matmul_nt(qh, kh), att_scale);
      if (variant == Variant::kEdge) {
        Var sh = tape.slice_cols(bind(blk.edge_scale), hh, hh + 1);
        logits = tape.add(logits, tape.mul_scalar_var(ebias, sh));
      }
      if (masked) logits = tape.add(logits, mbias);
      heads.push_back(tape.matmul(tape.softmax_rows(logits), vh));
    }
    Var att = tape.concat_cols(heads);
    att = tape.add_row_bc(tape.matmul(att, bind(blk.wo)), bind(blk.bo));
    x = tape.add(x, tape.mul_row_bc(att, m1.gate));

    Var xm2 = modulate(tape, tape.layer_norm_rows(x), m2.shift, m2.scale);
    Var hmid = tape.silu(tape.add_row_bc(tape.matmul(xm2, bind(blk.mlp_w1)),
                                         bind(blk.mlp_b1)));
    Var mlp_out = tape.add_row_bc(tape.matmul(hmid, bind(blk.mlp_w2)),
                                  bind(blk.mlp_b2));
    x = tape.add(x, tape.mul_row_bc(mlp_out, m2.gate));
  }

  Var fmods = tape.add_row_bc(tape.matmul(cond, bind(ids.final_adaln_w)),
                              bind(ids.final_adaln_b));
  Var fshift = tape.slice_cols(fmods, 0, W);
  Var fscale = tape.slice_cols(fmods, W, 2 * W);
  Var xf = modulate(tape, tape.layer_norm_rows(x), fshift, fscale);
  Var out = tape.add_row_bc(tape.matmul(xf, bind(ids.final_w)),
                            bind(ids.final_b));
  if (masked) out = tape.mul_col_bc(out, tape.input(mask_column(mask, n)));
  return out;
}

}  // namespace framediff::backbone
