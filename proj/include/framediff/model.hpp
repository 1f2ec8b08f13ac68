#pragma once

#include <cstdint>
#include <random>

#include "framediff/backbone.hpp"
#include "framediff/equinet.hpp"
#include "framediff/params.hpp"

namespace framediff {

// Frame constructor + denoiser bundled with their shared parameter store.
struct Model {
  equinet::Config eq_cfg;
  backbone::Config bb_cfg;
  backbone::Variant variant = backbone::Variant::kEdge;
  ParamStore params;
  equinet::ParamIds eq_ids;
  backbone::ParamIds bb_ids;

  void init(std::uint64_t seed) {
    params = ParamStore();
    std::mt19937_64 rng(seed);
    eq_ids = equinet::init_params(params, eq_cfg, rng);
    bb_ids = backbone::init_params(params, bb_cfg, rng);
  }

  // Overwrites every parameter with iid Gaussians; used by the oracle
  // checks, which probe the architecture rather than a trained state.
  void randomize(std::uint64_t seed, double stddev = 0.2) {
    std::mt19937_64 rng(seed);
    for (auto& e : params.entries()) fill_normal(e.value, stddev, rng);
  }
};

}  // namespace framediff
