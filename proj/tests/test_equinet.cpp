#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>

#include "framediff/equinet.hpp"
#include "framediff/geom.hpp"
#include "framediff/model.hpp"

using namespace framediff;
using geom::Frame;
using geom::Vec3;

namespace {

Model small_model(std::uint64_t seed) {
  Model m;
  m.eq_cfg = {3, 7, 32, 6};
  m.bb_cfg.layers = 1;
  m.bb_cfg.heads = 2;
  m.bb_cfg.width = 16;
  m.bb_cfg.t_embed_dim = 8;
  m.init(seed);
  return m;
}

Tensor randn(std::int64_t r, std::int64_t c, std::mt19937_64& rng,
             double stddev = 1.0) {
  std::normal_distribution<double> gauss(0.0, stddev);
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = gauss(rng);
  return t;
}

Tensor center(Tensor coords) {
  for (int pass = 0; pass < 2; ++pass)
    for (int c = 0; c < 3; ++c) {
      double m = 0.0;
      for (std::int64_t i = 0; i < coords.rows(); ++i) m += coords(i, c);
      m /= coords.rows();
      for (std::int64_t i = 0; i < coords.rows(); ++i) coords(i, c) -= m;
    }
  return coords;
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

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

std::vector<int> all_rows(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

Tensor frame_rows(const Frame& f) {
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

}  // namespace

TEST_CASE("single atom yields exactly zero coordinate channels") {
  Model model = small_model(1);
  Tensor coords(1, 3);  // centered single atom sits at the origin
  std::mt19937_64 rng(2);
  Tensor feats = randn(1, 6, rng);
  auto out = equinet::forward_plain(coords, feats, {0}, model.params,
                                    model.eq_ids, model.eq_cfg);
  for (std::size_t i = 0; i < out.x.size(); ++i) CHECK(out.x.data()[i] == 0.0);
}

TEST_CASE("coordinate channels rotate with the input, scalars do not") {
  Model model = small_model(3);
  model.randomize(4, 0.3);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor coords = center(randn(5, 3, rng, 1.5));
    Tensor feats = randn(5, 6, rng);
    const auto live = all_rows(5);
    auto base = equinet::forward_plain(coords, feats, live, model.params,
                                       model.eq_ids, model.eq_cfg);
    const Frame r = geom::random_rotation(100 + trial);
    auto rot = equinet::forward_plain(rotate_rows(coords, r), feats, live,
                                      model.params, model.eq_ids, model.eq_cfg);
    Tensor expect(base.x.rows(), base.x.cols());
    for (std::int64_t i = 0; i < base.x.rows(); ++i)
      for (std::int64_t c = 0; c < base.x.cols() / 3; ++c) {
        const Vec3 v = geom::invert_frame(
            r, {base.x(i, 3 * c), base.x(i, 3 * c + 1), base.x(i, 3 * c + 2)});
        expect(i, 3 * c) = v.x;
        expect(i, 3 * c + 1) = v.y;
        expect(i, 3 * c + 2) = v.z;
      }
    CHECK(max_diff(rot.x, expect) < 1e-6);
    CHECK(max_diff(rot.h, base.h) < 1e-6);
  }
}

TEST_CASE("swapping two atoms swaps outputs bit-identically") {
  Model model = small_model(6);
  model.randomize(7, 0.3);
  std::mt19937_64 rng(8);
  Tensor coords = center(randn(5, 3, rng, 1.5));
  Tensor feats = randn(5, 6, rng);
  const auto live = all_rows(5);
  auto base = equinet::forward_plain(coords, feats, live, model.params,
                                     model.eq_ids, model.eq_cfg);

  // swap atoms 1 and 3
  Tensor coords_s = coords, feats_s = feats;
  for (int c = 0; c < 3; ++c) std::swap(coords_s(1, c), coords_s(3, c));
  for (int c = 0; c < 6; ++c) std::swap(feats_s(1, c), feats_s(3, c));
  auto swapped = equinet::forward_plain(coords_s, feats_s, live, model.params,
                                        model.eq_ids, model.eq_cfg);

  const int perm[5] = {0, 3, 2, 1, 4};
  for (int i = 0; i < 5; ++i)
    for (std::int64_t c = 0; c < base.x.cols(); ++c)
      CHECK(swapped.x(i, c) == base.x(perm[i], c));
  for (int i = 0; i < 5; ++i)
    for (std::int64_t c = 0; c < base.h.cols(); ++c)
      CHECK(swapped.h(i, c) == base.h(perm[i], c));
}

TEST_CASE("node_frames matches the plain Gram-Schmidt reference") {
  Model model = small_model(9);
  model.randomize(10, 0.3);
  std::mt19937_64 rng(11);
  Tensor coords = center(randn(4, 3, rng, 1.5));
  Tensor feats = randn(4, 6, rng);
  const auto live = all_rows(4);

  ad::Tape tape;
  ParamBinder bind(tape, model.params);
  auto ch = equinet::forward(tape, tape.input(coords), tape.input(feats), live,
                             bind, model.eq_ids, model.eq_cfg);
  auto nf = equinet::node_frames(tape, ch);
  const Tensor& x = tape.val(ch.x);
  for (int i = 0; i < 4; ++i) {
    REQUIRE_FALSE(nf.frames[i].degenerate);
    const Frame ref = geom::gram_schmidt({x(i, 0), x(i, 1), x(i, 2)},
                                         {x(i, 3), x(i, 4), x(i, 5)});
    const Frame got = equinet::frame_from_var(tape, nf.frames[i]);
    CHECK(geom::geodesic_angle(ref, got) < 1e-12);
    CHECK(got.max_defect() < 1e-12);
  }
}

TEST_CASE("frame construction examples") {
  ad::Tape tape;
  Tensor v1(1, 3), v2(1, 3);
  v1(0, 0) = 1.0;
  v2(0, 1) = 2.0;
  auto fv = equinet::gs_frame(tape, tape.input(v1), tape.input(v2));
  CHECK_FALSE(fv.degenerate);
  const Frame f = equinet::frame_from_var(tape, fv);
  CHECK(geom::geodesic_angle(f, Frame::identity()) < 1e-14);

  Tensor z(1, 3);
  auto dz = equinet::gs_frame(tape, tape.input(z), tape.input(v2));
  CHECK(dz.degenerate);
  CHECK(geom::geodesic_angle(equinet::frame_from_var(tape, dz),
                             Frame::identity()) == 0.0);
}

TEST_CASE("global frame: identical node frames pool to themselves") {
  ad::Tape tape;
  const Frame f = geom::random_rotation(42);
  equinet::NodeFrames nf;
  for (int i = 0; i < 3; ++i)
    nf.frames.push_back({tape.input(frame_rows(f)), false});
  auto gf = equinet::global_frame(tape, nf, {std::vector<int>{0, 1, 2}}[0]);
  CHECK_FALSE(gf.degenerate);
  CHECK(geom::geodesic_angle(equinet::frame_from_var(tape, gf), f) < 1e-12);
}

TEST_CASE("global frame interpolates between two close frames") {
  ad::Tape tape;
  equinet::NodeFrames nf;
  nf.frames.push_back({tape.input(frame_rows(Frame::identity())), false});
  nf.frames.push_back({tape.input(frame_rows(Frame::rotation_z(0.2))), false});
  const std::vector<int> live{0, 1};
  auto gf = equinet::global_frame(tape, nf, live);
  const Frame pooled = equinet::frame_from_var(tape, gf);
  CHECK(geom::geodesic_angle(pooled, Frame::identity()) <= 0.1 + 1e-6);
  CHECK(geom::geodesic_angle(pooled, Frame::rotation_z(0.2)) <= 0.1 + 1e-6);
}

TEST_CASE("global frame: all-degenerate input falls back to identity") {
  ad::Tape tape;
  equinet::NodeFrames nf;
  nf.frames.push_back({tape.input(Tensor::identity(3)), true});
  nf.frames.push_back({tape.input(Tensor::identity(3)), true});
  const std::vector<int> live{0, 1};
  auto gf = equinet::global_frame(tape, nf, live);
  CHECK(gf.degenerate);
  CHECK(geom::geodesic_angle(equinet::frame_from_var(tape, gf),
                             Frame::identity()) == 0.0);
  const std::vector<int> none;
  CHECK_THROWS_AS(equinet::global_frame(tape, nf, none), EmptyMolecule);
}

TEST_CASE("mean-then-orthonormalize agrees with the polar projection") {
  // Newton iteration X <- (X + X^-T)/2 converges to the nearest orthogonal
  // matrix; for clusters of nearby frames both poolings must agree closely.
  auto polar = [](std::array<double, 9> m) {
    for (int it = 0; it < 20; ++it) {
      const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
                         m[1] * (m[3] * m[8] - m[5] * m[6]) +
                         m[2] * (m[3] * m[7] - m[4] * m[6]);
      std::array<double, 9> inv{};
      inv[0] = (m[4] * m[8] - m[5] * m[7]) / det;
      inv[1] = (m[2] * m[7] - m[1] * m[8]) / det;
      inv[2] = (m[1] * m[5] - m[2] * m[4]) / det;
      inv[3] = (m[5] * m[6] - m[3] * m[8]) / det;
      inv[4] = (m[0] * m[8] - m[2] * m[6]) / det;
      inv[5] = (m[2] * m[3] - m[0] * m[5]) / det;
      inv[6] = (m[3] * m[7] - m[4] * m[6]) / det;
      inv[7] = (m[1] * m[6] - m[0] * m[7]) / det;
      inv[8] = (m[0] * m[4] - m[1] * m[3]) / det;
      // average with the transpose of the inverse
      const std::array<double, 9> it_m{inv[0], inv[3], inv[6], inv[1], inv[4],
                                       inv[7], inv[2], inv[5], inv[8]};
      for (int i = 0; i < 9; ++i) m[i] = 0.5 * (m[i] + it_m[i]);
    }
    return m;
  };

  std::mt19937_64 rng(13);
  std::normal_distribution<double> small(0.0, 0.08);
  for (int trial = 0; trial < 20; ++trial) {
    const Frame base = geom::random_rotation(500 + trial);
    ad::Tape tape;
    equinet::NodeFrames nf;
    std::array<double, 9> mean{};
    for (int k = 0; k < 4; ++k) {
      const Frame jitter = geom::gram_schmidt(
          base.u1 + Vec3{small(rng), small(rng), small(rng)},
          base.u2 + Vec3{small(rng), small(rng), small(rng)});
      nf.frames.push_back({tape.input(frame_rows(jitter)), false});
      const auto m = jitter.matrix();
      for (int i = 0; i < 9; ++i) mean[i] += 0.25 * m[i];
    }
    const std::vector<int> live{0, 1, 2, 3};
    auto gf = equinet::global_frame(tape, nf, live);
    const Frame gs_pool = equinet::frame_from_var(tape, gf);
    const Frame polar_pool = Frame::from_matrix(polar(mean));
    CHECK(geom::geodesic_angle(gs_pool, polar_pool) < 0.02);
  }
}
