#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "framediff/autodiff.hpp"
#include "framediff/geom.hpp"
#include "framediff/model.hpp"
#include "framediff/molkit.hpp"

// Noise schedule, zero-CoM forward corruption, the reverse-step formula,
// and the three paradigm drivers (global-, local- and invariant-frame).

namespace framediff::diffusion {

struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha;  // T+1 entries, alpha[0] ~ 1, decreasing
  std::vector<double> sigma;  // sqrt(1 - alpha^2)

  double alpha_ts(int t, int s) const { return alpha[t] / alpha[s]; }
  double sigma2_ts(int t, int s) const {
    const double a = alpha_ts(t, s);
    return sigma[t] * sigma[t] - a * a * sigma[s] * sigma[s];
  }
  double sigma_to(int t, int s) const {
    return std::sqrt(sigma2_ts(t, s)) * sigma[s] / sigma[t];
  }
  double snr(int t) const {
    return alpha[t] * alpha[t] / (sigma[t] * sigma[t]);
  }
};

// Polynomial variance-preserving schedule: alpha_t^2 follows
// (1 - (t/T)^2)^2 with ratio clipping and a 1e-5 precision offset.
NoiseSchedule build_schedule(int T);

using State = molkit::EncodedMol;

// Feature block iid standard normal; coordinate block standard normal with
// the mean over live rows removed (exactly zero for a single atom).
State sample_zero_com_noise(std::int64_t n_atoms, int feat_dim,
                            const std::vector<std::uint8_t>& mask,
                            std::mt19937_64& rng);

// z_t = alpha_t m + sigma_t eps, elementwise on coords and features.
State forward_noise(const State& m, int t, const State& eps,
                    const NoiseSchedule& ns);

// z_{t-1} = z_t / alpha_{t|t-1} - sigma^2_{t|t-1}/(alpha_{t|t-1} sigma_t)
//           * eps_hat + sigma_{t->t-1} * inject  (inject may be null).
// Throws NumericalUnderflow when sigma_t < 1e-12.
State reverse_step(const State& z, const State& eps_hat, int t,
                   const NoiseSchedule& ns, const State* inject);

// Mean over nodes of geodesic_angle(node, global) / pi, in [0, 1].
double alignment_loss(const std::vector<geom::Frame>& node_frames,
                      const geom::Frame& global);

enum class Paradigm { kGfd, kLfd, kLfdAligned, kIfd };
Paradigm paradigm_from_string(const std::string& s);
const char* paradigm_name(Paradigm p);

struct LossBreakdown {
  double diff_loss = 0.0;
  double align_loss = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

struct StepStats {
  int frame_constructor_calls = 0;
  int degenerate_frames = 0;
};

// Test seams. frame_override replaces the constructed frames (per-node and
// global) with a fixed frame; denoiser_override replaces the whole
// project/backbone/invert block with a caller-supplied prediction of the
// globally-oriented noise.
struct Hooks {
  std::optional<geom::Frame> frame_override;
  std::function<ad::Var(ad::Tape&, ad::Var z_coords, ad::Var z_feats, int t)>
      denoiser_override;
};

// Training losses. mol must be centered over its live rows. Deterministic
// per seed (the seed drives t and eps). When grad is true, gradients
// accumulate into the model's parameter store.
LossBreakdown training_loss(Paradigm p, ad::Tape& tape, const State& mol,
                            Model& model, const NoiseSchedule& ns,
                            double lambda, std::uint64_t seed, bool grad,
                            StepStats* stats = nullptr,
                            const Hooks* hooks = nullptr);

// Same pipeline with (t, eps) supplied by the caller; the gradient-check
// and invariance oracles need the randomness pinned.
LossBreakdown training_loss_at(Paradigm p, ad::Tape& tape, const State& mol,
                               Model& model, const NoiseSchedule& ns,
                               double lambda, int t, const State& eps,
                               bool grad, StepStats* stats = nullptr,
                               const Hooks* hooks = nullptr);

// One denoiser evaluation eps_hat(z_t, t) following the paradigm's
// projection scheme; the predicted coordinate block is re-centered onto the
// zero-CoM subspace. Input coordinates are centered first.
State predict_noise(Paradigm p, const State& z, int t, Model& model,
                    StepStats* stats = nullptr,
                    const Hooks* hooks = nullptr);

// Global-frame canonicalization of a clean molecule (coordinates replaced
// by O^T x); features untouched.
State canonicalize(const State& mol, Model& model, bool* degenerate);

// Ancestral sampling from z_T; t = 1 injects zero noise. Returns the final
// state (coords centered) plus instrumentation counters.
struct SampleResult {
  State z0;
  StepStats stats;
};
SampleResult sample(Paradigm p, Model& model, const NoiseSchedule& ns,
                    std::int64_t n_atoms, std::uint64_t seed);

}  // namespace framediff::diffusion
