#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "framediff/autodiff.hpp"
#include "framediff/geom.hpp"
#include "framediff/params.hpp"

// Equivariant frame constructor: a multi-channel EGNN over the fully
// connected graph of unmasked atoms. Coordinate channels transform as
// vectors under rotation of the (centered) input; scalar features are
// invariant. Per-node frames come from Gram-Schmidt of the first two
// channels; the global frame is the re-orthonormalized mean of the
// per-node frames.

namespace framediff::equinet {

struct Config {
  int layers = 3;
  int channels = 7;
  int hidden = 64;
  int feat_dim = 6;
};

struct ParamIds {
  int chan_init = -1;  // 1 x C, distinct per-channel input scales
  int embed_w = -1, embed_b = -1;
  struct Layer {
    int msg_w1, msg_b1, msg_w2, msg_b2;
    int coord_w, coord_b;
    int upd_w1, upd_b1, upd_w2, upd_b2;
    int mix;  // C x C channel mixing, identity at init
  };
  std::vector<Layer> layers;
};

ParamIds init_params(ParamStore& store, const Config& cfg,
                     std::mt19937_64& rng);

struct Channels {
  ad::Var x;  // N x 3C coordinate channels, layout [c0 xyz, c1 xyz, ...]
  ad::Var h;  // N x hidden invariant features
};

// coords must be centered over the live rows (zero CoM); masked rows zero.
Channels forward(ad::Tape& tape, ad::Var coords, ad::Var feats,
                 const std::vector<int>& live_rows, ParamBinder& bind,
                 const ParamIds& ids, const Config& cfg);

// Tape-level Gram-Schmidt. The returned 3x3 node holds the frame
// transposed (rows u1,u2,u3 = O^T), which is the layout projections use.
// Falls back to the identity (constant, no gradient) below
// geom::kDegenerateTol.
struct FrameVar {
  ad::Var tr;  // 3 x 3, rows are the frame columns
  bool degenerate = false;
};
FrameVar gs_frame(ad::Tape& tape, ad::Var v1, ad::Var v2);

struct NodeFrames {
  std::vector<FrameVar> frames;  // one per row of the channel tensor
};
// frame_i = gram_schmidt(channel 0, channel 1) of node i.
NodeFrames node_frames(ad::Tape& tape, const Channels& ch);

// Mean of the non-degenerate live node frames, re-orthonormalized by
// Gram-Schmidt of its first two columns; identity + flag when everything
// degenerates. Throws EmptyMolecule when live_rows is empty.
FrameVar global_frame(ad::Tape& tape, const NodeFrames& nf,
                      const std::vector<int>& live_rows);

// Convenience plain-tensor evaluation (builds a local tape).
struct PlainChannels {
  Tensor x;
  Tensor h;
};
PlainChannels forward_plain(const Tensor& coords, const Tensor& feats,
                            const std::vector<int>& live_rows,
                            ParamStore& store, const ParamIds& ids,
                            const Config& cfg);

geom::Frame frame_from_var(const ad::Tape& tape, const FrameVar& fv);

}  // namespace framediff::equinet
