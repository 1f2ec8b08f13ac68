#include "framediff/equinet.hpp"

#include <cmath>
#include <string>

#include "framediff/errors.hpp"

namespace framediff::equinet {

using ad::Tape;
using ad::Var;

ParamIds init_params(ParamStore& store, const Config& cfg,
                     std::mt19937_64& rng) {
  ParamIds ids;
  const int H = cfg.hidden;
  const int C = cfg.channels;

  ids.chan_init = store.add("equinet.chan_init", 1, C);
  for (int c = 0; c < C; ++c)
    store.at(ids.chan_init).value(0, c) = 1.0 + 0.1 * c;

  ids.embed_w = store.add("equinet.embed.w", cfg.feat_dim, H);
  fill_normal(store.at(ids.embed_w).value, 1.0 / std::sqrt(cfg.feat_dim), rng);
  ids.embed_b = store.add("equinet.embed.b", 1, H);

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "equinet.l" + std::to_string(l) + ".";
    ParamIds::Layer lay;
    lay.msg_w1 = store.add(p + "msg.w1", 2 * H + C, H);
    fill_normal(store.at(lay.msg_w1).value, 1.0 / std::sqrt(2 * H + C), rng);
    lay.msg_b1 = store.add(p + "msg.b1", 1, H);
    lay.msg_w2 = store.add(p + "msg.w2", H, H);
    fill_normal(store.at(lay.msg_w2).value, 1.0 / std::sqrt(H), rng);
    lay.msg_b2 = store.add(p + "msg.b2", 1, H);
    lay.coord_w = store.add(p + "coord.w", H, C);
    fill_normal(store.at(lay.coord_w).value, 0.01 / std::sqrt(H), rng);
    lay.coord_b = store.add(p + "coord.b", 1, C);
    lay.upd_w1 = store.add(p + "upd.w1", 2 * H, H);
    fill_normal(store.at(lay.upd_w1).value, 1.0 / std::sqrt(2 * H), rng);
    lay.upd_b1 = store.add(p + "upd.b1", 1, H);
    lay.upd_w2 = store.add(p + "upd.w2", H, H);
    fill_normal(store.at(lay.upd_w2).value, 1.0 / std::sqrt(H), rng);
    lay.upd_b2 = store.add(p + "upd.b2", 1, H);
    lay.mix = store.add(p + "mix", C, C);
    for (int c = 0; c < C; ++c) store.at(lay.mix).value(c, c) = 1.0;
    ids.layers.push_back(lay);
  }
  return ids;
}

Channels forward(Tape& tape, Var coords, Var feats,
                 const std::vector<int>& live_rows, ParamBinder& bind,
                 const ParamIds& ids, const Config& cfg) {
  const int N = static_cast<int>(tape.val(coords).rows());

  // Directed pair list over live atoms; segment id = receiving row.
  std::vector<int> idx_i, idx_j;
  for (int a : live_rows)
    for (int b : live_rows)
      if (a != b) {
        idx_i.push_back(a);
        idx_j.push_back(b);
      }

  Var x = tape.channel_init(coords, bind(ids.chan_init));
  Var h = tape.add_row_bc(tape.matmul(feats, bind(ids.embed_w)),
                          bind(ids.embed_b));

  for (const auto& lay : ids.layers) {
    Var hi = tape.gather_rows(h, idx_i);
    Var hj = tape.gather_rows(h, idx_j);
    Var xi = tape.gather_rows(x, idx_i);
    Var xj = tape.gather_rows(x, idx_j);
    Var dx = tape.sub(xi, xj);
    Var dist = tape.sqnorm_groups(dx, 3);

    const Var msg_in_parts[] = {hi, hj, dist};
    Var msg_in = tape.concat_cols(msg_in_parts);
    Var m1 = tape.silu(tape.add_row_bc(tape.matmul(msg_in, bind(lay.msg_w1)),
                                       bind(lay.msg_b1)));
    Var msg = tape.silu(tape.add_row_bc(tape.matmul(m1, bind(lay.msg_w2)),
                                        bind(lay.msg_b2)));

    Var agg = tape.seg_sum_sorted(msg, idx_i, N);
    const Var upd_in_parts[] = {h, agg};
    Var upd_in = tape.concat_cols(upd_in_parts);
    Var u1 = tape.silu(tape.add_row_bc(tape.matmul(upd_in, bind(lay.upd_w1)),
                                       bind(lay.upd_b1)));
    h = tape.add(h, tape.add_row_bc(tape.matmul(u1, bind(lay.upd_w2)),
                                    bind(lay.upd_b2)));

    Var gate = tape.add_row_bc(tape.matmul(msg, bind(lay.coord_w)),
                               bind(lay.coord_b));
    Var contrib = tape.mul(dx, tape.repeat_cols(gate, 3));
    x = tape.add(x, tape.seg_sum_sorted(contrib, idx_i, N));
    x = tape.channel_mix(x, bind(lay.mix));
  }
  (void)cfg;
  return {x, h};
}

FrameVar gs_frame(Tape& tape, Var v1, Var v2) {
  static const Tensor kIdentity3 = Tensor::identity(3);
  const Tensor& a = tape.val(v1);
  const double n1 =
      std::sqrt(a(0, 0) * a(0, 0) + a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2));
  if (n1 < geom::kDegenerateTol) return {tape.input(kIdentity3), true};

  Var n1v = tape.sqrt(tape.sum_all(tape.mul(v1, v1)));
  Var u1 = tape.div_by_scalar_var(v1, n1v);
  Var d = tape.sum_all(tape.mul(v2, u1));
  Var rej = tape.sub(v2, tape.mul_scalar_var(u1, d));
  const Tensor& rv = tape.val(rej);
  const double n2 =
      std::sqrt(rv(0, 0) * rv(0, 0) + rv(0, 1) * rv(0, 1) + rv(0, 2) * rv(0, 2));
  if (n2 < geom::kDegenerateTol) return {tape.input(kIdentity3), true};

  Var n2v = tape.sqrt(tape.sum_all(tape.mul(rej, rej)));
  Var u2 = tape.div_by_scalar_var(rej, n2v);
  Var u3 = tape.cross3(u1, u2);
  const Var rows[] = {u1, u2, u3};
  return {tape.concat_rows(rows), false};
}

NodeFrames node_frames(Tape& tape, const Channels& ch) {
  NodeFrames nf;
  const std::int64_t n = tape.val(ch.x).rows();
  for (std::int64_t i = 0; i < n; ++i) {
    Var row =
        tape.slice_rows(ch.x, static_cast<int>(i), static_cast<int>(i) + 1);
    Var v1 = tape.slice_cols(row, 0, 3);
    Var v2 = tape.slice_cols(row, 3, 6);
    nf.frames.push_back(gs_frame(tape, v1, v2));
  }
  return nf;
}

FrameVar global_frame(Tape& tape, const NodeFrames& nf,
                      const std::vector<int>& live_rows) {
  static const Tensor kIdentity3 = Tensor::identity(3);
  if (live_rows.empty()) throw EmptyMolecule("global_frame: no live atoms");
  std::vector<Var> members;
  for (int r : live_rows)
    if (!nf.frames[r].degenerate) members.push_back(nf.frames[r].tr);
  if (members.empty()) return {tape.input(kIdentity3), true};

  Var mean = tape.mean_many_sorted(members);
  // The stored matrices are transposed frames, so the pooled frame's first
  // two columns are the first two rows of the mean.
  Var c1 = tape.slice_rows(mean, 0, 1);
  Var c2 = tape.slice_rows(mean, 1, 2);
  return gs_frame(tape, c1, c2);
}

PlainChannels forward_plain(const Tensor& coords, const Tensor& feats,
                            const std::vector<int>& live_rows,
                            ParamStore& store, const ParamIds& ids,
                            const Config& cfg) {
  Tape tape;
  ParamBinder bind(tape, store);
  Channels ch = forward(tape, tape.input(coords), tape.input(feats), live_rows,
                        bind, ids, cfg);
  return {tape.val(ch.x), tape.val(ch.h)};
}

geom::Frame frame_from_var(const Tape& tape, const FrameVar& fv) {
  const Tensor& t = tape.val(fv.tr);
  geom::Frame f;
  f.u1 = {t(0, 0), t(0, 1), t(0, 2)};
  f.u2 = {t(1, 0), t(1, 1), t(1, 2)};
  f.u3 = {t(2, 0), t(2, 1), t(2, 2)};
  return f;
}

}  // namespace framediff::equinet
