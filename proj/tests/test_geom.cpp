#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "framediff/geom.hpp"

using namespace framediff;
using geom::Frame;
using geom::Vec3;

namespace {

Vec3 random_unit_scaled(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> gauss(0.0, scale);
  return {gauss(rng), gauss(rng), gauss(rng)};
}

double frame_dist(const Frame& a, const Frame& b) {
  auto ma = a.matrix(), mb = b.matrix();
  double m = 0.0;
  for (int i = 0; i < 9; ++i) m = std::max(m, std::abs(ma[i] - mb[i]));
  return m;
}

Frame rotate_frame(const Frame& r, const Frame& f) {
  return {geom::invert_frame(r, f.u1), geom::invert_frame(r, f.u2),
          geom::invert_frame(r, f.u3)};
}

}  // namespace

TEST_CASE("gram_schmidt on already-orthonormal input is the identity") {
  Frame f = geom::gram_schmidt({1, 0, 0}, {0, 1, 0});
  CHECK(frame_dist(f, Frame::identity()) == 0.0);
}

TEST_CASE("gram_schmidt removes the parallel component") {
  Frame f = geom::gram_schmidt({2, 0, 0}, {1, 1, 0});
  CHECK(frame_dist(f, Frame::identity()) < 1e-15);
}

TEST_CASE("gram_schmidt rejects collinear input") {
  CHECK_THROWS_AS(geom::gram_schmidt({1, 0, 0}, {2, 0, 0}), DegenerateFrame);
  CHECK_THROWS_AS(geom::gram_schmidt({0, 0, 0}, {1, 0, 0}), DegenerateFrame);
  bool flag = false;
  Frame f = geom::gram_schmidt_or_identity({1, 0, 0}, {2, 0, 0}, &flag);
  CHECK(flag);
  CHECK(frame_dist(f, Frame::identity()) == 0.0);
}

TEST_CASE("gram_schmidt output satisfies frame invariants") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Frame f = geom::gram_schmidt(random_unit_scaled(rng, 2.0),
                                 random_unit_scaled(rng, 2.0));
    CHECK(f.max_defect() < 1e-10);
  }
}

TEST_CASE("gram_schmidt is rotation-equivariant") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 v1 = random_unit_scaled(rng, 1.5);
    const Vec3 v2 = random_unit_scaled(rng, 1.5);
    const Frame r = geom::random_rotation(1000 + trial);
    const Frame lhs =
        geom::gram_schmidt(geom::invert_frame(r, v1), geom::invert_frame(r, v2));
    const Frame rhs = rotate_frame(r, geom::gram_schmidt(v1, v2));
    CHECK(frame_dist(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("geodesic_angle closed forms") {
  const Frame i = Frame::identity();
  CHECK(geom::geodesic_angle(i, i) == 0.0);
  CHECK(geom::geodesic_angle(i, Frame::rotation_z(M_PI / 2)) ==
        doctest::Approx(M_PI / 2).epsilon(1e-12));
  CHECK(geom::geodesic_angle(i, Frame::rotation_z(M_PI)) ==
        doctest::Approx(M_PI).epsilon(1e-12));
  // intermediate angles recovered exactly, not just the axis-aligned ones
  for (double t : {0.1, 0.7, 1.9, 2.8}) {
    CHECK(geom::geodesic_angle(i, Frame::rotation_z(t)) ==
          doctest::Approx(t).epsilon(1e-10));
    CHECK(geom::geodesic_angle(i, Frame::rotation_x(t)) ==
          doctest::Approx(t).epsilon(1e-10));
  }
}

TEST_CASE("geodesic_angle is symmetric and left-invariant") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Frame a = geom::random_rotation(rng());
    const Frame b = geom::random_rotation(rng());
    const Frame r = geom::random_rotation(rng());
    const double ab = geom::geodesic_angle(a, b);
    CHECK(geom::geodesic_angle(b, a) == doctest::Approx(ab).epsilon(1e-12));
    CHECK(std::abs(geom::geodesic_angle(rotate_frame(r, a), rotate_frame(r, b)) -
                   ab) < 1e-10);
    CHECK(ab >= 0.0);
    CHECK(ab <= M_PI + 1e-12);
  }
}

TEST_CASE("remove_com centers and zeroes masked slots") {
  {
    auto out = geom::remove_com({{-1, 0, 0}, {1, 0, 0}}, {});
    CHECK(out[0].x == -1.0);
    CHECK(out[1].x == 1.0);
  }
  {
    auto out = geom::remove_com({{1, 1, 1}, {3, 3, 3}}, {});
    CHECK(out[0].x == doctest::Approx(-1.0));
    CHECK(out[1].z == doctest::Approx(1.0));
  }
  {
    auto out = geom::remove_com({{0, 0, 0}, {2, 0, 0}, {99, 99, 99}}, {1, 1, 0});
    CHECK(out[0].x == doctest::Approx(-1.0));
    CHECK(out[1].x == doctest::Approx(1.0));
    CHECK(out[2].x == 0.0);
    CHECK(out[2].y == 0.0);
  }
  CHECK_THROWS_AS(geom::remove_com({{1, 2, 3}}, {0}), EmptyMolecule);
}

TEST_CASE("remove_com mean is zero to accumulated round-off") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(5.0, 30.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 20);
    std::vector<Vec3> coords(n);
    for (auto& v : coords) v = {gauss(rng), gauss(rng), gauss(rng)};
    auto out = geom::remove_com(coords, {});
    Vec3 mean{0, 0, 0};
    for (const auto& v : out) mean += v;
    CHECK(std::abs(mean.x) <= 1e-13 * n);
    CHECK(std::abs(mean.y) <= 1e-13 * n);
    CHECK(std::abs(mean.z) <= 1e-13 * n);
    // idempotent
    auto again = geom::remove_com(out, {});
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(again[i].x - out[i].x) < 1e-14);
      CHECK(std::abs(again[i].y - out[i].y) < 1e-14);
    }
  }
}

TEST_CASE("apply_frame / invert_frame") {
  CHECK(geom::apply_frame(Frame::identity(), {1, 2, 3}).y == 2.0);
  const Vec3 p = geom::apply_frame(Frame::rotation_z(M_PI / 2), {1, 0, 0});
  CHECK(p.x == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(p.y == doctest::Approx(-1.0));
  CHECK(p.z == 0.0);

  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Frame f = geom::random_rotation(rng());
    const Vec3 x{gauss(rng), gauss(rng), gauss(rng)};
    const Vec3 rt = geom::invert_frame(f, geom::apply_frame(f, x));
    CHECK(std::abs(rt.x - x.x) < 1e-12);
    CHECK(std::abs(rt.y - x.y) < 1e-12);
    CHECK(std::abs(rt.z - x.z) < 1e-12);
  }
}

TEST_CASE("random_rotation determinism and validity") {
  const Frame a = geom::random_rotation(42);
  const Frame b = geom::random_rotation(42);
  CHECK(frame_dist(a, b) == 0.0);
  for (std::uint64_t s = 0; s < 200; ++s)
    CHECK(geom::random_rotation(s).max_defect() < 1e-10);
}

TEST_CASE("random_rotation angle distribution matches uniform SO(3)") {
  // E[theta] for Haar measure is pi/2 + 2/pi ~= 2.2074
  double sum = 0.0;
  const int n = 1000;
  for (int s = 0; s < n; ++s)
    sum += geom::geodesic_angle(Frame::identity(), geom::random_rotation(s));
  const double mean = sum / n;
  CHECK(mean > 1.8);
  CHECK(mean < 2.4);
}

TEST_CASE("rigid transform applies rotation then translation") {
  geom::RigidTransform g{Frame::rotation_z(M_PI / 2), {1, 0, 0}};
  const Vec3 out = g.apply({1, 0, 0});
  CHECK(out.x == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(out.y == doctest::Approx(1.0));
}
