#include "framediff/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "framediff/errors.hpp"
#include "framediff/metrics.hpp"

namespace framediff::verify {

using diffusion::Paradigm;
using diffusion::State;
using geom::Frame;
using geom::Vec3;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

State random_state(std::int64_t n, int feat_dim, std::mt19937_64& rng) {
  State s;
  s.coords = Tensor(n, 3);
  s.feats = Tensor(n, feat_dim);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < s.coords.size(); ++i)
    s.coords.data()[i] = 1.5 * gauss(rng);
  for (std::size_t i = 0; i < s.feats.size(); ++i)
    s.feats.data()[i] = gauss(rng);
  return s;
}

Tensor rotate_rows(const Tensor& coords, const Frame& r) {
  Tensor out(coords.rows(), 3);
  for (std::int64_t i = 0; i < coords.rows(); ++i) {
    const Vec3 v =
        geom::invert_frame(r, {coords(i, 0), coords(i, 1), coords(i, 2)});
    out(i, 0) = v.x;
    out(i, 1) = v.y;
    out(i, 2) = v.z;
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

std::vector<int> random_permutation(std::int64_t n, std::mt19937_64& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::int64_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::int64_t> pick(0, i);
    std::swap(p[i], p[pick(rng)]);
  }
  return p;
}

Tensor permute_rows(const Tensor& a, const std::vector<int>& perm) {
  Tensor out(a.rows(), a.cols());
  for (std::int64_t i = 0; i < a.rows(); ++i)
    for (std::int64_t c = 0; c < a.cols(); ++c) out(i, c) = a(perm[i], c);
  return out;
}

}  // namespace

OracleReport check_equivariance(const std::string& name, const StateFn& fn,
                                Group group, OutputAction action, int trials,
                                double tol, std::uint64_t seed, int n_atoms,
                                int feat_dim) {
  OracleReport rep;
  rep.name = name;
  rep.tolerance = tol;
  rep.trials = trials;
  rep.seed = seed;

  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  double max_dev = 0.0;

  for (int trial = 0; trial < trials; ++trial) {
    State s = random_state(n_atoms, feat_dim, rng);
    const Frame r = geom::random_rotation(rng());
    const Vec3 t{gauss(rng), gauss(rng), gauss(rng)};
    const auto perm = random_permutation(n_atoms, rng);

    State transformed = s;
    std::vector<int> out_perm;
    bool rotated = false, translated = false;
    switch (group) {
      case Group::kRotation:
        transformed.coords = rotate_rows(s.coords, r);
        rotated = true;
        break;
      case Group::kTranslation:
        translated = true;
        break;
      case Group::kRotoTranslation:
        transformed.coords = rotate_rows(s.coords, r);
        rotated = true;
        translated = true;
        break;
      case Group::kPermutation:
        transformed.coords = permute_rows(s.coords, perm);
        transformed.feats = permute_rows(s.feats, perm);
        out_perm = perm;
        break;
    }
    if (translated)
      for (std::int64_t i = 0; i < transformed.coords.rows(); ++i)
        for (int c = 0; c < 3; ++c)
          transformed.coords(i, c) += (c == 0 ? t.x : c == 1 ? t.y : t.z);

    const State lhs = fn(transformed);
    State rhs = fn(s);
    if (!out_perm.empty()) {
      rhs.coords = permute_rows(rhs.coords, out_perm);
      rhs.feats = permute_rows(rhs.feats, out_perm);
    }
    if (rotated) rhs.coords = rotate_rows(rhs.coords, r);
    if (translated && action == OutputAction::kMatchInput)
      for (std::int64_t i = 0; i < rhs.coords.rows(); ++i)
        for (int c = 0; c < 3; ++c)
          rhs.coords(i, c) += (c == 0 ? t.x : c == 1 ? t.y : t.z);

    max_dev = std::max(max_dev, max_abs_diff(lhs.coords, rhs.coords));
    max_dev = std::max(max_dev, max_abs_diff(lhs.feats, rhs.feats));
  }
  rep.max_deviation = max_dev;
  rep.pass = max_dev <= tol;
  return rep;
}

OracleReport check_gradients(const std::string& name,
                             const std::function<double(bool)>& loss_fn,
                             ParamStore& params, int sample_count, double h,
                             double tol, std::uint64_t seed, int corrupt,
                             std::size_t flat_lo, std::size_t flat_hi) {
  OracleReport rep;
  rep.name = name;
  rep.tolerance = tol;
  rep.seed = seed;
  rep.trials = sample_count;
  rep.expect_fail = corrupt >= 0;

  params.zero_grad();
  loss_fn(true);

  if (flat_hi == 0) flat_hi = params.scalar_count();
  std::mt19937_64 rng(splitmix64(seed ^ 0x96adful));
  std::vector<std::size_t> picks;
  for (int i = 0; i < sample_count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(flat_lo, flat_hi - 1);
    picks.push_back(pick(rng));
  }

  double max_err = 0.0;
  for (int i = 0; i < sample_count; ++i) {
    const std::size_t idx = picks[i];
    double analytic = params.grad_flat(idx);
    if (corrupt == i) analytic *= 2.0;
    params.add_flat(idx, h);
    const double up = loss_fn(false);
    params.add_flat(idx, -2.0 * h);
    const double down = loss_fn(false);
    params.add_flat(idx, h);
    const double fd = (up - down) / (2.0 * h);
    const double err =
        std::abs(analytic - fd) / (std::abs(analytic) + std::abs(fd) + 1e-8);
    max_err = std::max(max_err, err);
  }
  rep.max_deviation = max_err;
  rep.pass = max_err <= tol;
  return rep;
}

namespace {

Model make_probe_model(std::uint64_t seed, int width = 32, int layers = 2) {
  Model model;
  model.eq_cfg = {2, 4, 24, 6};
  model.bb_cfg.layers = layers;
  model.bb_cfg.heads = 2;
  model.bb_cfg.width = width;
  model.bb_cfg.mlp_ratio = 2;
  model.bb_cfg.t_embed_dim = 16;
  model.init(seed);
  model.randomize(seed + 1, 0.25);
  return model;
}

State toy_state(std::size_t which, const molkit::FeatureCodec& codec) {
  const auto& templates = molkit::toy_templates();
  molkit::Molecule mol = templates[which % templates.size()].mol;
  mol.coords = geom::remove_com(mol.coords, mol.mask);
  return molkit::encode_molecule(mol, codec);
}

void center_state(State& s) {
  std::vector<geom::Vec3> v(s.coords.rows());
  for (std::int64_t i = 0; i < s.coords.rows(); ++i)
    v[i] = {s.coords(i, 0), s.coords(i, 1), s.coords(i, 2)};
  v = geom::remove_com(v, s.mask);
  for (std::int64_t i = 0; i < s.coords.rows(); ++i) {
    s.coords(i, 0) = v[i].x;
    s.coords(i, 1) = v[i].y;
    s.coords(i, 2) = v[i].z;
  }
}

void suite_equivariance(std::vector<OracleReport>& out, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);

  // geometry kernel identities
  {
    double dev = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Vec3 v1{gauss(rng), gauss(rng), gauss(rng)};
      const Vec3 v2{gauss(rng), gauss(rng), gauss(rng)};
      const Frame r = geom::random_rotation(rng());
      bool d1 = false, d2 = false;
      const Frame a = geom::gram_schmidt_or_identity(
          geom::invert_frame(r, v1), geom::invert_frame(r, v2), &d1);
      const Frame b = geom::gram_schmidt_or_identity(v1, v2, &d2);
      if (d1 || d2) continue;
      const Frame rb = {geom::invert_frame(r, b.u1), geom::invert_frame(r, b.u2),
                        geom::invert_frame(r, b.u3)};
      const auto ma = a.matrix(), mb2 = rb.matrix();
      for (int i = 0; i < 9; ++i) dev = std::max(dev, std::abs(ma[i] - mb2[i]));
    }
    out.push_back({"geom.gram_schmidt.rotation_equivariance", dev, 1e-10,
                   dev <= 1e-10, 100, seed});
  }
  {
    double dev = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Frame a = geom::random_rotation(rng());
      const Frame b = geom::random_rotation(rng());
      const Frame r = geom::random_rotation(rng());
      const Frame ra = {geom::invert_frame(r, a.u1), geom::invert_frame(r, a.u2),
                        geom::invert_frame(r, a.u3)};
      const Frame rb = {geom::invert_frame(r, b.u1), geom::invert_frame(r, b.u2),
                        geom::invert_frame(r, b.u3)};
      dev = std::max(dev, std::abs(geom::geodesic_angle(ra, rb) -
                                   geom::geodesic_angle(a, b)));
    }
    out.push_back({"geom.geodesic_angle.left_invariance", dev, 1e-10,
                   dev <= 1e-10, 100, seed});
  }
  {
    double dev = 0.0;
    const int n = 16;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Vec3> coords(n);
      for (auto& v : coords)
        v = {30 * gauss(rng) + 5, 30 * gauss(rng), 30 * gauss(rng)};
      auto centered = geom::remove_com(coords, {});
      Vec3 mean{0, 0, 0};
      for (const auto& v : centered) mean += v;
      dev = std::max({dev, std::abs(mean.x), std::abs(mean.y), std::abs(mean.z)});
    }
    out.push_back({"geom.remove_com.zero_mean", dev, 1e-13 * n, dev <= 1e-13 * n,
                   50, seed});
  }
  {
    double dev = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Frame f = geom::random_rotation(rng());
      const Vec3 x{3 * gauss(rng), 3 * gauss(rng), 3 * gauss(rng)};
      const Vec3 rt = geom::invert_frame(f, geom::apply_frame(f, x));
      dev = std::max({dev, std::abs(rt.x - x.x), std::abs(rt.y - x.y),
                      std::abs(rt.z - x.z)});
    }
    out.push_back({"geom.frame.project_roundtrip", dev, 1e-12, dev <= 1e-12,
                   100, seed});
  }

  Model model = make_probe_model(seed);
  molkit::FeatureCodec codec;

  // equinet channel equivariance: 100 rotations x 10 inputs
  {
    double dev = 0.0;
    for (int input = 0; input < 10; ++input) {
      State s = random_state(5, 6, rng);
      center_state(s);
      const auto live = s.live_rows();
      auto base = equinet::forward_plain(s.coords, s.feats, live, model.params,
                                         model.eq_ids, model.eq_cfg);
      for (int rot = 0; rot < 10; ++rot) {
        const Frame r = geom::random_rotation(rng());
        auto rot_ch = equinet::forward_plain(rotate_rows(s.coords, r), s.feats,
                                             live, model.params, model.eq_ids,
                                             model.eq_cfg);
        // rotate every 3-vector channel of the base output
        Tensor expect(base.x.rows(), base.x.cols());
        for (std::int64_t i = 0; i < base.x.rows(); ++i)
          for (std::int64_t c = 0; c < base.x.cols() / 3; ++c) {
            const Vec3 v = geom::invert_frame(
                r, {base.x(i, 3 * c), base.x(i, 3 * c + 1), base.x(i, 3 * c + 2)});
            expect(i, 3 * c) = v.x;
            expect(i, 3 * c + 1) = v.y;
            expect(i, 3 * c + 2) = v.z;
          }
        dev = std::max(dev, max_abs_diff(rot_ch.x, expect));
        dev = std::max(dev, max_abs_diff(rot_ch.h, base.h));
      }
    }
    out.push_back({"equinet.rotation_equivariance", dev, 1e-6, dev <= 1e-6,
                   100, seed});
  }
  // translation absorbed by centering
  {
    double dev = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      State s = random_state(5, 6, rng);
      State shifted = s;
      const Vec3 t{gauss(rng), gauss(rng), gauss(rng)};
      for (std::int64_t i = 0; i < shifted.coords.rows(); ++i) {
        shifted.coords(i, 0) += t.x;
        shifted.coords(i, 1) += t.y;
        shifted.coords(i, 2) += t.z;
      }
      center_state(s);
      center_state(shifted);
      const auto live = s.live_rows();
      auto a = equinet::forward_plain(s.coords, s.feats, live, model.params,
                                      model.eq_ids, model.eq_cfg);
      auto b = equinet::forward_plain(shifted.coords, shifted.feats, live,
                                      model.params, model.eq_ids, model.eq_cfg);
      dev = std::max(dev, max_abs_diff(a.x, b.x));
      dev = std::max(dev, max_abs_diff(a.h, b.h));
    }
    out.push_back({"equinet.translation_invariance", dev, 1e-12, dev <= 1e-12,
                   20, seed});
  }
  // permutation: bit-identical thanks to value-sorted aggregation
  {
    double dev = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      State s = random_state(6, 6, rng);
      center_state(s);
      const auto perm = random_permutation(6, rng);
      State ps;
      ps.coords = permute_rows(s.coords, perm);
      ps.feats = permute_rows(s.feats, perm);
      const auto live = s.live_rows();
      auto a = equinet::forward_plain(s.coords, s.feats, live, model.params,
                                      model.eq_ids, model.eq_cfg);
      auto b = equinet::forward_plain(ps.coords, ps.feats, live, model.params,
                                      model.eq_ids, model.eq_cfg);
      dev = std::max(dev, max_abs_diff(b.x, permute_rows(a.x, perm)));
      dev = std::max(dev, max_abs_diff(b.h, permute_rows(a.h, perm)));
    }
    out.push_back({"equinet.permutation_bit_equivariance", dev, 0.0, dev <= 0.0,
                   20, seed});
  }
  // pooled frame equivariance
  {
    double dev = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      State s = random_state(5, 6, rng);
      center_state(s);
      const auto live = s.live_rows();
      const Frame r = geom::random_rotation(rng());

      auto frame_of = [&](const Tensor& coords, bool* degen) {
        ad::Tape tape;
        ParamBinder bind(tape, model.params);
        auto ch = equinet::forward(tape, tape.input(coords),
                                   tape.input(s.feats), live, bind,
                                   model.eq_ids, model.eq_cfg);
        auto nf = equinet::node_frames(tape, ch);
        auto gf = equinet::global_frame(tape, nf, live);
        *degen = gf.degenerate;
        return equinet::frame_from_var(tape, gf);
      };
      bool d1 = false, d2 = false;
      const Frame base = frame_of(s.coords, &d1);
      const Frame rot = frame_of(rotate_rows(s.coords, r), &d2);
      if (d1 || d2) continue;
      const Frame expect = {geom::invert_frame(r, base.u1),
                            geom::invert_frame(r, base.u2),
                            geom::invert_frame(r, base.u3)};
      const auto ma = rot.matrix(), mb = expect.matrix();
      for (int i = 0; i < 9; ++i) dev = std::max(dev, std::abs(ma[i] - mb[i]));
    }
    out.push_back({"equinet.global_frame.equivariance", dev, 1e-6, dev <= 1e-6,
                   50, seed});
  }

  // backbone permutation equivariance
  {
    auto fn = [&](const State& s) {
      ad::Tape tape;
      ParamBinder bind(tape, model.params);
      ad::Var coords = tape.input(s.coords);
      ad::Var feats = tape.input(s.feats);
      const ad::Var parts[] = {coords, feats};
      ad::Var tokens = tape.concat_cols(parts);
      ad::Var pred = backbone::forward(tape, tokens, 7, s.mask, bind,
                                       model.bb_ids, model.bb_cfg,
                                       model.variant);
      State outp;
      outp.coords = tape.val(tape.slice_cols(pred, 0, 3));
      outp.feats = tape.val(tape.slice_cols(pred, 3, 9));
      return outp;
    };
    out.push_back(check_equivariance("backbone.permutation_equivariance", fn,
                                     Group::kPermutation,
                                     OutputAction::kMatchInput, 20, 1e-12,
                                     seed + 3, 6, 6));
  }
  // edge bias depends on coordinates only through distances
  {
    double dev = 0.0;
    const Tensor& rbf_w = model.params.at(model.bb_ids.edge_w).value;
    for (int trial = 0; trial < 50; ++trial) {
      State s = random_state(5, 6, rng);
      const Frame r = geom::random_rotation(rng());
      const Vec3 t{gauss(rng), gauss(rng), gauss(rng)};
      Tensor moved = rotate_rows(s.coords, r);
      for (std::int64_t i = 0; i < moved.rows(); ++i) {
        moved(i, 0) += t.x;
        moved(i, 1) += t.y;
        moved(i, 2) += t.z;
      }
      const Tensor a = backbone::edge_bias(s.coords, {}, rbf_w, model.bb_cfg);
      const Tensor b = backbone::edge_bias(moved, {}, rbf_w, model.bb_cfg);
      dev = std::max(dev, max_abs_diff(a, b));
    }
    out.push_back({"backbone.edge_bias.isometry_invariance", dev, 1e-10,
                   dev <= 1e-10, 50, seed});
  }

  // full one-step GFD denoiser equivariance (the central claim)
  {
    auto fn = [&](const State& s) {
      return diffusion::predict_noise(Paradigm::kGfd, s, 7, model);
    };
    out.push_back(check_equivariance("gfd.denoiser.rototranslation", fn,
                                     Group::kRotoTranslation,
                                     OutputAction::kNoisePrediction, 50, 1e-5,
                                     seed + 4));
    out.push_back(check_equivariance("gfd.denoiser.permutation", fn,
                                     Group::kPermutation,
                                     OutputAction::kNoisePrediction, 20, 1e-10,
                                     seed + 5));
  }

  // negative control: backbone on raw coordinates is not equivariant
  {
    auto fn = [&](const State& s) {
      return diffusion::predict_noise(Paradigm::kIfd, s, 7, model);
    };
    OracleReport rep = check_equivariance("backbone.raw_coords.rotation", fn,
                                          Group::kRotation,
                                          OutputAction::kNoisePrediction, 20,
                                          1e-5, seed + 6);
    rep.expect_fail = true;
    out.push_back(rep);
  }

  // training-loss invariance under rigid motions, all frame paradigms
  const diffusion::NoiseSchedule ns = diffusion::build_schedule(50);
  for (Paradigm p :
       {Paradigm::kGfd, Paradigm::kLfd, Paradigm::kLfdAligned}) {
    double dev = 0.0;
    ad::Tape tape;
    for (std::size_t which = 0; which < molkit::toy_templates().size();
         ++which) {
      State mol = toy_state(which, codec);
      std::mt19937_64 eps_rng(splitmix64(seed + which));
      const State eps = diffusion::sample_zero_com_noise(
          mol.coords.rows(), 6, mol.mask, eps_rng);
      const int t = 1 + static_cast<int>(which * 7) % ns.T;
      diffusion::StepStats base_stats;
      const auto base = diffusion::training_loss_at(p, tape, mol, model, ns,
                                                    0.1, t, eps, false,
                                                    &base_stats);
      // A degenerate frame falls back to the identity, which is not
      // equivariant; two-atom molecules stay collinear under zero-CoM noise
      // and always hit that path, so they carry no invariance claim.
      if (base_stats.degenerate_frames > 0) continue;
      for (int trial = 0; trial < 20; ++trial) {
        const Frame r = geom::random_rotation(rng());
        const Vec3 tr{gauss(rng), gauss(rng), gauss(rng)};
        State mol_r = mol;
        mol_r.coords = rotate_rows(mol.coords, r);
        for (std::int64_t i = 0; i < mol_r.coords.rows(); ++i) {
          mol_r.coords(i, 0) += tr.x;
          mol_r.coords(i, 1) += tr.y;
          mol_r.coords(i, 2) += tr.z;
        }
        center_state(mol_r);
        State eps_r = eps;
        eps_r.coords = rotate_rows(eps.coords, r);
        const auto moved = diffusion::training_loss_at(p, tape, mol_r, model,
                                                       ns, 0.1, t, eps_r,
                                                       false);
        dev = std::max(dev, std::abs(moved.total - base.total));
      }
    }
    out.push_back({std::string("diffusion.loss_rigid_invariance.") +
                       diffusion::paradigm_name(p),
                   dev, 1e-6, dev <= 1e-6, 20, seed});
  }

  // IFD canonical form is rotation invariant on non-degenerate templates
  {
    double dev = 0.0;
    int covered = 0;
    for (std::size_t which = 0; which < molkit::toy_templates().size();
         ++which) {
      State mol = toy_state(which, codec);
      bool degen = false;
      const State canon = diffusion::canonicalize(mol, model, &degen);
      if (degen) continue;
      ++covered;
      for (int trial = 0; trial < 50; ++trial) {
        const Frame r = geom::random_rotation(rng());
        State mol_r = mol;
        mol_r.coords = rotate_rows(mol.coords, r);
        bool degen_r = false;
        const State canon_r = diffusion::canonicalize(mol_r, model, &degen_r);
        if (degen_r) {
          dev = std::max(dev, 1.0);
          continue;
        }
        dev = std::max(dev, max_abs_diff(canon.coords, canon_r.coords));
      }
    }
    out.push_back({"ifd.canonicalize.rotation_invariance", dev, 1e-5,
                   dev <= 1e-5 && covered > 0, 50 * covered, seed});
  }
}

void suite_gradients(std::vector<OracleReport>& out, std::uint64_t seed) {
  // analytic sanity case: d/dtheta ||theta||^2 = 2 theta
  {
    ParamStore quad;
    const int id = quad.add("theta", 1, 8);
    std::mt19937_64 rng(splitmix64(seed));
    fill_normal(quad.at(id).value, 1.0, rng);
    auto loss = [&](bool with_grad) {
      double s = 0.0;
      const auto& v = quad.at(id).value;
      for (std::size_t i = 0; i < v.size(); ++i) s += v.data()[i] * v.data()[i];
      if (with_grad)
        for (std::size_t i = 0; i < v.size(); ++i)
          quad.at(id).grad.data()[i] += 2.0 * v.data()[i];
      return s;
    };
    out.push_back(check_gradients("gradients.quadratic_exact", loss, quad, 8,
                                  1e-4, 1e-10, seed));
  }

  molkit::FeatureCodec codec;
  const diffusion::NoiseSchedule ns = diffusion::build_schedule(20);

  auto loss_check = [&](const char* name, Paradigm p, double lambda,
                        std::uint64_t s, int corrupt, bool backbone_only) {
    Model model = make_probe_model(s);
    State mol = toy_state(3, codec);  // CH4
    std::mt19937_64 rng(splitmix64(s + 9));
    const State eps =
        diffusion::sample_zero_com_noise(mol.coords.rows(), 6, mol.mask, rng);
    ad::Tape tape;
    auto fn = [&, p, lambda](bool grad) {
      return diffusion::training_loss_at(p, tape, mol, model, ns, lambda, 11,
                                         eps, grad)
          .total;
    };
    // IFD never touches the frame constructor, so only the backbone range
    // carries gradient there.
    std::size_t lo = 0;
    if (backbone_only)
      for (const auto& e : model.params.entries()) {
        if (e.name.rfind("bb.", 0) == 0) break;
        lo += e.value.size();
      }
    out.push_back(check_gradients(name, fn, model.params, 64, 1e-4, 1e-4, s,
                                  corrupt, lo, 0));
  };

  loss_check("gradients.gfd_loss", Paradigm::kGfd, 0.0, seed + 1, -1, false);
  loss_check("gradients.lfd_aligned_loss", Paradigm::kLfdAligned, 0.1, seed + 2,
             -1, false);
  loss_check("gradients.ifd_loss", Paradigm::kIfd, 0.0, seed + 3, -1, true);
  loss_check("gradients.corrupted_negative_control", Paradigm::kGfd, 0.0,
             seed + 4, 5, false);
}

void suite_schedule(std::vector<OracleReport>& out, std::uint64_t seed) {
  {
    const auto ns = diffusion::build_schedule(1000);
    double dev = 0.0;
    for (int t = 0; t <= ns.T; ++t)
      dev = std::max(dev, std::abs(ns.alpha[t] * ns.alpha[t] +
                                   ns.sigma[t] * ns.sigma[t] - 1.0));
    out.push_back({"schedule.variance_preserving_identity", dev, 1e-12,
                   dev <= 1e-12, 1001, seed});
  }
  {
    // reverse_step with the true noise must hit the posterior mean of
    // q(z_{t-1} | z_t, m), evaluated independently from the schedule arrays
    const auto ns = diffusion::build_schedule(10);
    std::mt19937_64 rng(splitmix64(seed + 21));
    double dev = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
      State mol = random_state(5, 6, rng);
      center_state(mol);
      for (int t = 1; t <= ns.T; ++t) {
        const State eps =
            diffusion::sample_zero_com_noise(5, 6, mol.mask, rng);
        const State z = diffusion::forward_noise(mol, t, eps, ns);
        const State stepped = diffusion::reverse_step(z, eps, t, ns, nullptr);
        const int s = t - 1;
        const double a_ts = ns.alpha[t] / ns.alpha[s];
        const double s2_ts = ns.sigma[t] * ns.sigma[t] -
                             a_ts * a_ts * ns.sigma[s] * ns.sigma[s];
        const double w_z = a_ts * ns.sigma[s] * ns.sigma[s] /
                           (ns.sigma[t] * ns.sigma[t]);
        const double w_m =
            ns.alpha[s] * s2_ts / (ns.sigma[t] * ns.sigma[t]);
        for (std::int64_t i = 0; i < z.coords.rows(); ++i)
          for (int c = 0; c < 3; ++c)
            dev = std::max(dev, std::abs(stepped.coords(i, c) -
                                         (w_z * z.coords(i, c) +
                                          w_m * mol.coords(i, c))));
        for (std::int64_t i = 0; i < z.feats.rows(); ++i)
          for (int c = 0; c < 6; ++c)
            dev = std::max(dev, std::abs(stepped.feats(i, c) -
                                         (w_z * z.feats(i, c) +
                                          w_m * mol.feats(i, c))));
      }
    }
    out.push_back({"diffusion.reverse_step.posterior_mean", dev, 1e-10,
                   dev <= 1e-10, 50, seed});
  }
  {
    // zero-CoM conservation along a full T=100 trajectory
    Model model = make_probe_model(seed + 2);
    const auto ns = diffusion::build_schedule(100);
    std::mt19937_64 rng(splitmix64(seed + 31));
    State z = diffusion::sample_zero_com_noise(5, 6, {}, rng);
    double dev = 0.0;
    auto mean_dev = [&](const Tensor& coords) {
      double worst = 0.0;
      for (int c = 0; c < 3; ++c) {
        double m = 0.0;
        for (std::int64_t i = 0; i < coords.rows(); ++i) m += coords(i, c);
        worst = std::max(worst, std::abs(m / coords.rows()));
      }
      return worst;
    };
    dev = std::max(dev, mean_dev(z.coords));
    for (int t = ns.T; t >= 1; --t) {
      const State eps_hat =
          diffusion::predict_noise(Paradigm::kGfd, z, t, model);
      if (t > 1) {
        const State inject = diffusion::sample_zero_com_noise(5, 6, {}, rng);
        z = diffusion::reverse_step(z, eps_hat, t, ns, &inject);
      } else {
        z = diffusion::reverse_step(z, eps_hat, t, ns, nullptr);
      }
      dev = std::max(dev, mean_dev(z.coords));
    }
    out.push_back({"diffusion.zero_com_conservation", dev, 1e-10, dev <= 1e-10,
                   100, seed});
  }
  {
    // alignment loss closed forms
    double dev = 0.0;
    const Frame i3 = Frame::identity();
    dev = std::max(dev, std::abs(diffusion::alignment_loss({i3, i3}, i3)));
    dev = std::max(dev, std::abs(diffusion::alignment_loss(
                             {i3, Frame::rotation_z(M_PI)}, i3) -
                         0.5));
    std::mt19937_64 rng(splitmix64(seed + 41));
    for (int trial = 0; trial < 20; ++trial) {
      const Frame a = geom::random_rotation(rng());
      const Frame b = geom::random_rotation(rng());
      const Frame g = geom::random_rotation(rng());
      const Frame r = geom::random_rotation(rng());
      auto rot = [&](const Frame& f) {
        return Frame{geom::invert_frame(r, f.u1), geom::invert_frame(r, f.u2),
                     geom::invert_frame(r, f.u3)};
      };
      const double base = diffusion::alignment_loss({a, b}, g);
      const double moved =
          diffusion::alignment_loss({rot(a), rot(b)}, rot(g));
      dev = std::max(dev, std::abs(base - moved));
      if (base < 0.0 || base > 1.0) dev = std::max(dev, 1.0);
    }
    out.push_back({"diffusion.alignment_loss.closed_forms", dev, 1e-10,
                   dev <= 1e-10, 22, seed});
  }
}

void suite_metrics(std::vector<OracleReport>& out, std::uint64_t seed) {
  const auto& table = metrics::BondTable::builtin();
  std::mt19937_64 rng(splitmix64(seed + 51));

  {
    // stability/validity/hash invariant under rigid motion and permutation
    double dev = 0.0;
    auto mols = molkit::synth_toy_dataset(20, seed + 1);
    for (auto& mol : mols) {
      const auto bonds = metrics::infer_bonds(mol, table);
      const double stab = metrics::atom_stability(mol, bonds);
      const bool valid = metrics::validity(mol, bonds);
      const auto hash = metrics::canonical_hash(mol, bonds);

      molkit::Molecule moved = mol;
      const Frame r = geom::random_rotation(rng());
      std::normal_distribution<double> gauss(0.0, 2.0);
      const Vec3 t{gauss(rng), gauss(rng), gauss(rng)};
      for (auto& v : moved.coords) v = geom::invert_frame(r, v) + t;
      const auto bonds_m = metrics::infer_bonds(moved, table);
      if (metrics::atom_stability(moved, bonds_m) != stab) dev = 1.0;
      if (metrics::validity(moved, bonds_m) != valid) dev = 1.0;
      if (metrics::canonical_hash(moved, bonds_m) != hash) dev = 1.0;

      molkit::Molecule perm = mol;
      const auto p = random_permutation(mol.size(), rng);
      for (std::size_t i = 0; i < mol.size(); ++i) {
        perm.coords[i] = mol.coords[p[i]];
        perm.types[i] = mol.types[p[i]];
        perm.charges[i] = mol.charges[p[i]];
      }
      const auto bonds_p = metrics::infer_bonds(perm, table);
      if (metrics::atom_stability(perm, bonds_p) != stab) dev = 1.0;
      if (metrics::canonical_hash(perm, bonds_p) != hash) dev = 1.0;
    }
    out.push_back({"metrics.rigid_and_permutation_invariance", dev, 0.0,
                   dev <= 0.0, 20, seed});
  }
  {
    // report ranges and the stable => atom_stability == 1 implication
    double dev = 0.0;
    auto mols = molkit::synth_toy_dataset(30, seed + 2);
    const auto rep = metrics::evaluate_batch(mols, table);
    for (double f :
         {rep.atom_stability, rep.mol_stability, rep.validity, rep.uniqueness})
      if (f < 0.0 || f > 1.0) dev = 1.0;
    for (const auto& mol : mols) {
      const auto bonds = metrics::infer_bonds(mol, table);
      if (metrics::mol_stable(mol, bonds) &&
          metrics::atom_stability(mol, bonds) != 1.0)
        dev = 1.0;
    }
    out.push_back({"metrics.report_ranges", dev, 0.0, dev <= 0.0, 30, seed});
  }
}

}  // namespace

std::vector<OracleReport> run_suite(const std::string& which,
                                    std::uint64_t seed) {
  std::vector<OracleReport> out;
  const bool all = which == "all";
  if (all || which == "equivariance") suite_equivariance(out, seed);
  if (all || which == "gradients") suite_gradients(out, seed);
  if (all || which == "schedule") suite_schedule(out, seed);
  if (all || which == "metrics") suite_metrics(out, seed);
  if (out.empty())
    throw ConfigError("unknown suite: " + which +
                      " (equivariance|gradients|schedule|metrics|all)");
  return out;
}

bool all_ok(const std::vector<OracleReport>& reports) {
  for (const auto& r : reports)
    if (!r.ok()) return false;
  return true;
}

std::string format_table(const std::vector<OracleReport>& reports) {
  std::ostringstream out;
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%-48s %-12s %-10s %-8s %-7s %s\n", "check",
                "max_dev", "tol", "trials", "seed", "result");
  out << buf;
  for (const auto& r : reports) {
    const char* verdict =
        r.ok() ? (r.expect_fail ? "ok (fails as expected)" : "ok") : "FAIL";
    std::snprintf(buf, sizeof(buf), "%-48s %-12.3e %-10.1e %-8d %-7llu %s\n",
                  r.name.c_str(), r.max_deviation, r.tolerance, r.trials,
                  static_cast<unsigned long long>(r.seed), verdict);
    out << buf;
  }
  return out.str();
}

std::string format_csv(const std::vector<OracleReport>& reports) {
  std::ostringstream out;
  out << "check,max_deviation,tolerance,trials,seed,expect_fail,pass,ok\n";
  for (const auto& r : reports) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%s,%.6e,%.6e,%d,%llu,%d,%d,%d\n",
                  r.name.c_str(), r.max_deviation, r.tolerance, r.trials,
                  static_cast<unsigned long long>(r.seed), r.expect_fail ? 1 : 0,
                  r.pass ? 1 : 0, r.ok() ? 1 : 0);
    out << buf;
  }
  return out.str();
}

}  // namespace framediff::verify
