#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "framediff/autodiff.hpp"
#include "framediff/params.hpp"

// Non-equivariant denoiser: a pre-norm transformer over atom tokens with
// adaptive layer-norm conditioning on the timestep and, in the edge
// variant, an additive attention bias built from interatomic distances of
// the (frame-projected) token coordinates. No positional encodings, so the
// network is permutation-equivariant.

namespace framediff::backbone {

enum class Variant { kEdge, kPlain };

struct Config {
  int layers = 4;
  int heads = 4;
  int width = 128;
  int mlp_ratio = 4;
  int t_embed_dim = 64;
  int token_dim = 9;  // 3 coords + feature block
  int out_dim = 9;
  int rbf_count = 16;
  double rbf_max = 5.0;    // centers span [0, rbf_max] Angstrom
  double rbf_width = 0.5;  // shared Gaussian width
  double mask_bias = -1e9;
};

struct ParamIds {
  int embed_w = -1, embed_b = -1;
  int tmlp_w1 = -1, tmlp_b1 = -1, tmlp_w2 = -1, tmlp_b2 = -1;
  int edge_w = -1;  // 1 x rbf_count, shared across blocks
  struct Block {
    int adaln_w, adaln_b;  // width x 6*width, zero at init
    int wq, bq, wk, bk, wv, bv, wo, bo;
    int edge_scale;  // 1 x heads
    int mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  };
  std::vector<Block> blocks;
  int final_adaln_w = -1, final_adaln_b = -1;  // width x 2*width
  int final_w = -1, final_b = -1;              // zero at init
};

ParamIds init_params(ParamStore& store, const Config& cfg,
                     std::mt19937_64& rng);

// Sinusoidal embedding, interleaved [sin, cos, ...], frequencies geometric
// from 1 down to 1e-4. dim must be even.
Tensor timestep_embedding(int t, int dim);

// Distance-derived pre-softmax attention bias (forward-only convenience;
// the same ops run inside forward()). Masked rows/columns get mask_bias.
Tensor edge_bias(const Tensor& coords, const std::vector<std::uint8_t>& mask,
                 const Tensor& rbf_w, const Config& cfg);

// tokens: N x token_dim, masked rows zeroed. Returns N x out_dim with
// masked rows zeroed.
ad::Var forward(ad::Tape& tape, ad::Var tokens, int t,
                const std::vector<std::uint8_t>& mask, ParamBinder& bind,
                const ParamIds& ids, const Config& cfg, Variant variant);

}  // namespace framediff::backbone
