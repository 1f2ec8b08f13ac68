#include "framediff/diffusion.hpp"

#include <cassert>
#include <cmath>

#include "framediff/errors.hpp"

namespace framediff::diffusion {

using ad::Tape;
using ad::Var;

namespace {

constexpr double kPrecisionOffset = 1e-5;
constexpr double kRatioFloor = 1e-3;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Two-pass column mean removal over the live rows, matching geom::remove_com.
void center_columns(Tensor& coords, const std::vector<int>& live) {
  if (live.empty()) throw EmptyMolecule("center: no live atoms");
  const double inv = 1.0 / static_cast<double>(live.size());
  for (int pass = 0; pass < 2; ++pass) {
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (int r : live) mean += coords(r, c);
      mean *= inv;
      for (int r : live) coords(r, c) -= mean;
    }
  }
}

}  // namespace

NoiseSchedule build_schedule(int T) {
  if (T < 1) throw InvalidT("build_schedule: T must be >= 1");
  NoiseSchedule ns;
  ns.T = T;
  ns.alpha.resize(T + 1);
  ns.sigma.resize(T + 1);
  std::vector<double> a2(T + 1);
  double prev_raw = 1.0, prev = 1.0;
  for (int t = 0; t <= T; ++t) {
    const double x = static_cast<double>(t) / T;
    const double raw = (1.0 - x * x) * (1.0 - x * x);
    if (t == 0) {
      a2[t] = raw;
    } else {
      const double ratio =
          std::clamp(prev_raw > 0.0 ? raw / prev_raw : 0.0, kRatioFloor, 1.0);
      a2[t] = prev * ratio;
    }
    prev_raw = raw;
    prev = a2[t];
  }
  for (int t = 0; t <= T; ++t) {
    const double alpha2 = (1.0 - 2.0 * kPrecisionOffset) * a2[t] + kPrecisionOffset;
    ns.alpha[t] = std::sqrt(alpha2);
    ns.sigma[t] = std::sqrt(1.0 - alpha2);
  }
  return ns;
}

State sample_zero_com_noise(std::int64_t n_atoms, int feat_dim,
                            const std::vector<std::uint8_t>& mask,
                            std::mt19937_64& rng) {
  State eps;
  eps.coords = Tensor(n_atoms, 3);
  eps.feats = Tensor(n_atoms, feat_dim);
  eps.mask = mask;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::int64_t i = 0; i < n_atoms; ++i) {
    if (!(mask.empty() || mask[i])) continue;
    for (int c = 0; c < 3; ++c) eps.coords(i, c) = gauss(rng);
    for (int c = 0; c < feat_dim; ++c) eps.feats(i, c) = gauss(rng);
  }
  center_columns(eps.coords, eps.live_rows());
  return eps;
}

State forward_noise(const State& m, int t, const State& eps,
                    const NoiseSchedule& ns) {
  assert(t >= 0 && t <= ns.T);
  const double a = ns.alpha[t], s = ns.sigma[t];
  State z;
  z.mask = m.mask;
  z.coords = Tensor(m.coords.rows(), m.coords.cols());
  z.feats = Tensor(m.feats.rows(), m.feats.cols());
  for (std::size_t i = 0; i < z.coords.size(); ++i)
    z.coords.data()[i] = a * m.coords.data()[i] + s * eps.coords.data()[i];
  for (std::size_t i = 0; i < z.feats.size(); ++i)
    z.feats.data()[i] = a * m.feats.data()[i] + s * eps.feats.data()[i];
  return z;
}

State reverse_step(const State& z, const State& eps_hat, int t,
                   const NoiseSchedule& ns, const State* inject) {
  if (t < 1 || t > ns.T) throw Error("reverse_step: t out of range");
  if (ns.sigma[t] < 1e-12)
    throw NumericalUnderflow("reverse_step: sigma_t below 1e-12");
  const int s = t - 1;
  const double a_ts = ns.alpha_ts(t, s);
  const double s2_ts = ns.sigma2_ts(t, s);
  const double c_z = 1.0 / a_ts;
  const double c_eps = s2_ts / (a_ts * ns.sigma[t]);
  const double c_inj = ns.sigma_to(t, s);

  State out;
  out.mask = z.mask;
  out.coords = Tensor(z.coords.rows(), z.coords.cols());
  out.feats = Tensor(z.feats.rows(), z.feats.cols());
  for (std::size_t i = 0; i < out.coords.size(); ++i) {
    double v = c_z * z.coords.data()[i] - c_eps * eps_hat.coords.data()[i];
    if (inject) v += c_inj * inject->coords.data()[i];
    out.coords.data()[i] = v;
  }
  for (std::size_t i = 0; i < out.feats.size(); ++i) {
    double v = c_z * z.feats.data()[i] - c_eps * eps_hat.feats.data()[i];
    if (inject) v += c_inj * inject->feats.data()[i];
    out.feats.data()[i] = v;
  }
  return out;
}

double alignment_loss(const std::vector<geom::Frame>& node_frames,
                      const geom::Frame& global) {
  if (node_frames.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& f : node_frames) sum += geom::geodesic_angle(f, global);
  return sum / (M_PI * static_cast<double>(node_frames.size()));
}

Paradigm paradigm_from_string(const std::string& s) {
  if (s == "gfd") return Paradigm::kGfd;
  if (s == "lfd") return Paradigm::kLfd;
  if (s == "lfd-aligned") return Paradigm::kLfdAligned;
  if (s == "ifd") return Paradigm::kIfd;
  throw ConfigError("unknown paradigm: " + s);
}

const char* paradigm_name(Paradigm p) {
  switch (p) {
    case Paradigm::kGfd: return "gfd";
    case Paradigm::kLfd: return "lfd";
    case Paradigm::kLfdAligned: return "lfd-aligned";
    case Paradigm::kIfd: return "ifd";
  }
  return "?";
}

namespace {

Tensor frame_tensor_transposed(const geom::Frame& f) {
  Tensor t(3, 3);
  t(0, 0) = f.u1.x;
  t(0, 1) = f.u1.y;
  t(0, 2) = f.u1.z;
  t(1, 0) = f.u2.x;
  t(1, 1) = f.u2.y;
  t(1, 2) = f.u2.z;
  t(2, 0) = f.u3.x;
  t(2, 1) = f.u3.y;
  t(2, 2) = f.u3.z;
  return t;
}

// Geodesic angle between two frames held as transposed 3x3 nodes,
// differentiable: atan2(|R - R^T|_F / (2 sqrt 2), (tr R - 1)/2), R = A^T B.
Var frame_angle(Tape& tape, Var ta, Var tb) {
  Var r = tape.matmul_nt(ta, tb);
  Var cos_t = tape.clamp(tape.scale(tape.add_const(tape.trace3(r), -1.0), 0.5),
                         -1.0, 1.0);
  Var asym = tape.sub(r, tape.transpose(r));
  Var sin_t = tape.scale(tape.sqrt(tape.sum_all(tape.mul(asym, asym))),
                         1.0 / (2.0 * std::sqrt(2.0)));
  return tape.atan2(sin_t, cos_t);
}

struct PipelineOut {
  Var eps_c;
  Var eps_f;
  Var align;  // invalid unless requested
};

// Shared projection/backbone/inversion block for all paradigms.
PipelineOut run_pipeline(Paradigm p, Tape& tape, Var zc, Var zf, int t,
                         const std::vector<std::uint8_t>& mask,
                         const std::vector<int>& live, Model& model,
                         bool want_align, StepStats* stats,
                         const Hooks* hooks) {
  ParamBinder bind(tape, model.params);
  PipelineOut out;

  if (hooks && hooks->denoiser_override) {
    Var pred = hooks->denoiser_override(tape, zc, zf, t);
    out.eps_c = tape.slice_cols(pred, 0, 3);
    out.eps_f = tape.slice_cols(pred, 3, 3 + model.eq_cfg.feat_dim);
    if (want_align) out.align = tape.input(Tensor(1, 1));
    return out;
  }

  const bool forced = hooks && hooks->frame_override.has_value();
  equinet::NodeFrames nf;
  equinet::FrameVar gf;
  if (p != Paradigm::kIfd) {
    if (forced) {
      Var tr = tape.input(frame_tensor_transposed(*hooks->frame_override));
      const std::int64_t n = tape.val(zc).rows();
      for (std::int64_t i = 0; i < n; ++i) nf.frames.push_back({tr, false});
      gf = {tr, false};
    } else {
      equinet::Channels ch =
          equinet::forward(tape, zc, zf, live, bind, model.eq_ids, model.eq_cfg);
      if (stats) ++stats->frame_constructor_calls;
      nf = equinet::node_frames(tape, ch);
      gf = equinet::global_frame(tape, nf, live);
      if (stats) {
        for (int r : live) stats->degenerate_frames += nf.frames[r].degenerate;
        stats->degenerate_frames += gf.degenerate;
      }
    }
  }

  Var coords_in;
  switch (p) {
    case Paradigm::kGfd:
      coords_in = tape.matmul_nt(zc, gf.tr);
      break;
    case Paradigm::kLfd:
    case Paradigm::kLfdAligned: {
      std::vector<Var> rows;
      const std::int64_t n = tape.val(zc).rows();
      for (std::int64_t i = 0; i < n; ++i) {
        Var row = tape.slice_rows(zc, static_cast<int>(i),
                                  static_cast<int>(i) + 1);
        rows.push_back(tape.matmul_nt(row, nf.frames[i].tr));
      }
      coords_in = tape.concat_rows(rows);
      break;
    }
    case Paradigm::kIfd:
      coords_in = zc;
      break;
  }

  const Var token_parts[] = {coords_in, zf};
  Var tokens = tape.concat_cols(token_parts);
  Var pred = backbone::forward(tape, tokens, t, mask, bind, model.bb_ids,
                               model.bb_cfg, model.variant);
  Var pc = tape.slice_cols(pred, 0, 3);
  out.eps_f = tape.slice_cols(pred, 3, 3 + model.eq_cfg.feat_dim);

  switch (p) {
    case Paradigm::kGfd:
      pc = tape.matmul(pc, gf.tr);
      break;
    case Paradigm::kLfd:
    case Paradigm::kLfdAligned: {
      std::vector<Var> rows;
      const std::int64_t n = tape.val(pc).rows();
      for (std::int64_t i = 0; i < n; ++i) {
        Var row =
            tape.slice_rows(pc, static_cast<int>(i), static_cast<int>(i) + 1);
        rows.push_back(tape.matmul(row, nf.frames[i].tr));
      }
      pc = tape.concat_rows(rows);
      break;
    }
    case Paradigm::kIfd:
      break;
  }
  out.eps_c = tape.center_rows(pc, live);

  if (want_align) {
    if (p == Paradigm::kIfd || forced) {
      out.align = tape.input(Tensor(1, 1));
    } else {
      std::vector<Var> angles;
      for (int r : live)
        angles.push_back(frame_angle(tape, nf.frames[r].tr, gf.tr));
      out.align = tape.scale(tape.mean_many_sorted(angles), 1.0 / M_PI);
    }
  }
  return out;
}

}  // namespace

LossBreakdown training_loss_at(Paradigm p, Tape& tape, const State& mol,
                               Model& model, const NoiseSchedule& ns,
                               double lambda, int t, const State& eps,
                               bool grad, StepStats* stats,
                               const Hooks* hooks) {
  tape.reset();
  const State z = forward_noise(mol, t, eps, ns);
  const std::vector<int> live = mol.live_rows();

  Var zc = tape.input(z.coords);
  Var zf = tape.input(z.feats);
  const bool aligned = (p == Paradigm::kLfdAligned);
  PipelineOut pipe = run_pipeline(p, tape, zc, zf, t, mol.mask, live, model,
                                  aligned, stats, hooks);

  Var dc = tape.sub(tape.input(eps.coords), pipe.eps_c);
  Var df = tape.sub(tape.input(eps.feats), pipe.eps_f);
  Var sum_sq = tape.add(tape.sum_all(tape.mul(dc, dc)),
                        tape.sum_all(tape.mul(df, df)));
  const double inv_count =
      1.0 / (static_cast<double>(live.size()) * (3 + model.eq_cfg.feat_dim));
  Var diff = tape.scale(sum_sq, inv_count);

  Var total = diff;
  if (aligned) total = tape.add(diff, tape.scale(pipe.align, lambda));
  if (grad) tape.backward(total);

  LossBreakdown lb;
  lb.diff_loss = tape.scalar(diff);
  lb.align_loss = aligned ? tape.scalar(pipe.align) : 0.0;
  lb.lambda = aligned ? lambda : 0.0;
  lb.total = tape.scalar(total);
  return lb;
}

LossBreakdown training_loss(Paradigm p, Tape& tape, const State& mol,
                            Model& model, const NoiseSchedule& ns,
                            double lambda, std::uint64_t seed, bool grad,
                            StepStats* stats, const Hooks* hooks) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_int_distribution<int> pick_t(1, ns.T);
  const int t = pick_t(rng);
  const State eps = sample_zero_com_noise(
      mol.coords.rows(), static_cast<int>(mol.feats.cols()), mol.mask, rng);
  return training_loss_at(p, tape, mol, model, ns, lambda, t, eps, grad, stats,
                          hooks);
}

State predict_noise(Paradigm p, const State& z, int t, Model& model,
                    StepStats* stats, const Hooks* hooks) {
  State zin = z;
  const std::vector<int> live = zin.live_rows();
  center_columns(zin.coords, live);

  Tape tape;
  Var zc = tape.input(zin.coords);
  Var zf = tape.input(zin.feats);
  PipelineOut pipe = run_pipeline(p, tape, zc, zf, t, zin.mask, live, model,
                                  false, stats, hooks);
  State out;
  out.mask = z.mask;
  out.coords = tape.val(pipe.eps_c);
  out.feats = tape.val(pipe.eps_f);
  return out;
}

State canonicalize(const State& mol, Model& model, bool* degenerate) {
  State m = mol;
  const std::vector<int> live = m.live_rows();
  center_columns(m.coords, live);

  Tape tape;
  ParamBinder bind(tape, model.params);
  Var zc = tape.input(m.coords);
  Var zf = tape.input(m.feats);
  equinet::Channels ch =
      equinet::forward(tape, zc, zf, live, bind, model.eq_ids, model.eq_cfg);
  equinet::NodeFrames nf = equinet::node_frames(tape, ch);
  equinet::FrameVar gf = equinet::global_frame(tape, nf, live);
  if (degenerate) *degenerate = gf.degenerate;

  Var proj = tape.matmul_nt(zc, gf.tr);
  State out;
  out.mask = m.mask;
  out.coords = tape.val(proj);
  out.feats = m.feats;
  return out;
}

SampleResult sample(Paradigm p, Model& model, const NoiseSchedule& ns,
                    std::int64_t n_atoms, std::uint64_t seed) {
  const int feat_dim = model.eq_cfg.feat_dim;
  std::mt19937_64 rng(splitmix64(seed ^ 0xfd1f0u));
  SampleResult res;
  State z = sample_zero_com_noise(n_atoms, feat_dim, {}, rng);
  for (int t = ns.T; t >= 1; --t) {
    const State eps_hat = predict_noise(p, z, t, model, &res.stats);
    if (t > 1) {
      const State inject = sample_zero_com_noise(n_atoms, feat_dim, {}, rng);
      z = reverse_step(z, eps_hat, t, ns, &inject);
    } else {
      z = reverse_step(z, eps_hat, t, ns, nullptr);
    }
  }
  center_columns(z.coords, z.live_rows());
  res.z0 = std::move(z);
  return res;
}

}  // namespace framediff::diffusion
