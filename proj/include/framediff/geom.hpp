#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "framediff/errors.hpp"

// Pure geometry kernel: orthonormal frames, Gram-Schmidt, SO(3) angles,
// center-of-mass projection. Everything here is a plain function of its
// inputs in double precision; no learned state, safe to call concurrently.

namespace framediff::geom {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Inputs with |v1| or the orthogonalized residual of v2 below this are
// treated as degenerate.
inline constexpr double kDegenerateTol = 1e-8;

// Right-handed orthonormal basis stored as columns u1, u2, u3 (det = +1).
struct Frame {
  Vec3 u1{1, 0, 0}, u2{0, 1, 0}, u3{0, 0, 1};

  static Frame identity() { return {}; }
  static Frame rotation_x(double angle);
  static Frame rotation_y(double angle);
  static Frame rotation_z(double angle);

  // Row-major 3x3 matrix with u1,u2,u3 as columns.
  std::array<double, 9> matrix() const {
    return {u1.x, u2.x, u3.x, u1.y, u2.y, u3.y, u1.z, u2.z, u3.z};
  }
  static Frame from_matrix(const std::array<double, 9>& m) {
    return {{m[0], m[3], m[6]}, {m[1], m[4], m[7]}, {m[2], m[5], m[8]}};
  }

  double determinant() const { return dot(u1, cross(u2, u3)); }
  // Largest deviation from orthonormality / right-handedness.
  double max_defect() const;
};

struct RigidTransform {
  Frame rotation;
  Vec3 translation;

  Vec3 apply(const Vec3& v) const;
};

// u1 = v1/|v1|, u2 = normalized rejection of v2 from u1, u3 = u1 x u2.
// Throws DegenerateFrame when either normalization falls below
// kDegenerateTol.
Frame gram_schmidt(const Vec3& v1, const Vec3& v2);

// Non-throwing variant for hot paths; falls back to the identity frame and
// sets *degenerate.
Frame gram_schmidt_or_identity(const Vec3& v1, const Vec3& v2,
                               bool* degenerate);

// Rotation angle in [0, pi] between two frames, from R = A^T B via
// atan2(|R - R^T|_F / (2*sqrt(2)), (tr(R) - 1) / 2). The cosine is clamped
// to [-1, 1] and the sine to [0, inf) before atan2.
double geodesic_angle(const Frame& a, const Frame& b);

// Rotate a column vector: apply = O^T x (into the frame),
// invert = O y (back out). invert_frame(O, apply_frame(O, x)) == x.
Vec3 apply_frame(const Frame& o, const Vec3& x);
Vec3 invert_frame(const Frame& o, const Vec3& y);

// Subtracts the mean of the unmasked rows (two passes, so the residual
// mean is at rounding level); masked slots are zeroed. Throws
// EmptyMolecule when the mask selects nothing.
std::vector<Vec3> remove_com(std::vector<Vec3> coords,
                             const std::vector<std::uint8_t>& mask);

// Haar-uniform rotation: Gram-Schmidt of two standard normal vectors.
// Deterministic per seed.
Frame random_rotation(std::uint64_t seed);

}  // namespace framediff::geom
