#include "framediff/geom.hpp"

#include <algorithm>
#include <random>

namespace framediff::geom {

Frame Frame::rotation_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {{1, 0, 0}, {0, c, s}, {0, -s, c}};
}

Frame Frame::rotation_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {{c, 0, -s}, {0, 1, 0}, {s, 0, c}};
}

Frame Frame::rotation_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {{c, s, 0}, {-s, c, 0}, {0, 0, 1}};
}

double Frame::max_defect() const {
  double d = 0.0;
  d = std::max(d, std::abs(norm(u1) - 1.0));
  d = std::max(d, std::abs(norm(u2) - 1.0));
  d = std::max(d, std::abs(norm(u3) - 1.0));
  d = std::max(d, std::abs(dot(u1, u2)));
  d = std::max(d, std::abs(dot(u1, u3)));
  d = std::max(d, std::abs(dot(u2, u3)));
  d = std::max(d, std::abs(determinant() - 1.0));
  return d;
}

Vec3 RigidTransform::apply(const Vec3& v) const {
  return invert_frame(rotation, v) + translation;
}

Frame gram_schmidt(const Vec3& v1, const Vec3& v2) {
  bool degenerate = false;
  Frame f = gram_schmidt_or_identity(v1, v2, &degenerate);
  if (degenerate)
    throw DegenerateFrame("gram_schmidt: input vectors are degenerate");
  return f;
}

Frame gram_schmidt_or_identity(const Vec3& v1, const Vec3& v2,
                               bool* degenerate) {
  const double n1 = norm(v1);
  if (n1 < kDegenerateTol) {
    if (degenerate) *degenerate = true;
    return Frame::identity();
  }
  const Vec3 u1 = v1 * (1.0 / n1);
  const Vec3 rej = v2 - u1 * dot(v2, u1);
  const double n2 = norm(rej);
  if (n2 < kDegenerateTol) {
    if (degenerate) *degenerate = true;
    return Frame::identity();
  }
  const Vec3 u2 = rej * (1.0 / n2);
  if (degenerate) *degenerate = false;
  return {u1, u2, cross(u1, u2)};
}

double geodesic_angle(const Frame& a, const Frame& b) {
  const auto ma = a.matrix();
  const auto mb = b.matrix();
  // r = a^T b
  double r[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[i * 3 + j] =
          ma[0 + i] * mb[0 + j] + ma[3 + i] * mb[3 + j] + ma[6 + i] * mb[6 + j];
  double cos_t = 0.5 * (r[0] + r[4] + r[8] - 1.0);
  cos_t = std::clamp(cos_t, -1.0, 1.0);
  double asym = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double d = r[i * 3 + j] - r[j * 3 + i];
      asym += d * d;
    }
  double sin_t = std::sqrt(asym) / (2.0 * std::sqrt(2.0));
  sin_t = std::max(sin_t, 0.0);
  return std::atan2(sin_t, cos_t);
}

Vec3 apply_frame(const Frame& o, const Vec3& x) {
  return {dot(o.u1, x), dot(o.u2, x), dot(o.u3, x)};
}

Vec3 invert_frame(const Frame& o, const Vec3& y) {
  return o.u1 * y.x + o.u2 * y.y + o.u3 * y.z;
}

std::vector<Vec3> remove_com(std::vector<Vec3> coords,
                             const std::vector<std::uint8_t>& mask) {
  std::size_t live = 0;
  for (std::size_t i = 0; i < coords.size(); ++i)
    if (mask.empty() || mask[i]) ++live;
  if (live == 0) throw EmptyMolecule("remove_com: mask selects no atoms");

  // Two passes: the second removes the rounding residue of the first.
  for (int pass = 0; pass < 2; ++pass) {
    Vec3 mean{0, 0, 0};
    for (std::size_t i = 0; i < coords.size(); ++i)
      if (mask.empty() || mask[i]) mean += coords[i];
    mean = mean * (1.0 / static_cast<double>(live));
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (mask.empty() || mask[i])
        coords[i] = coords[i] - mean;
      else
        coords[i] = {0, 0, 0};
    }
  }
  return coords;
}

Frame random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (;;) {
    const Vec3 v1{gauss(rng), gauss(rng), gauss(rng)};
    const Vec3 v2{gauss(rng), gauss(rng), gauss(rng)};
    bool degenerate = false;
    Frame f = gram_schmidt_or_identity(v1, v2, &degenerate);
    if (!degenerate) return f;
  }
}

}  // namespace framediff::geom
