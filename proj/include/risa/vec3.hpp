#pragma once

#include <array>
#include <cmath>

#include "risa/error.hpp"
#include "risa/rng.hpp"

namespace risa {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline double dot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  double n = norm(v);
  return {v.x / n, v.y / n, v.z / n};
}

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }

  double& operator()(int i, int j) { return m[3 * i + j]; }
  double operator()(int i, int j) const { return m[3 * i + j]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) -
           m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

struct RigidTransform {
  Mat3 rotation = Mat3::identity();
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  // RtR = I and det(R) = 1, both within 1e-12.
  void validate() const {
    Mat3 rtr = rotation.transposed() * rotation;
    Mat3 id = Mat3::identity();
    for (int i = 0; i < 9; ++i)
      if (std::abs(rtr.m[i] - id.m[i]) > 1e-12)
        fail(ErrorCode::InvalidRotation, "rotation is not orthonormal");
    if (std::abs(rotation.det() - 1.0) > 1e-12)
      fail(ErrorCode::InvalidRotation, "rotation determinant is not +1");
  }
};

// Unit quaternion (w, x, y, z) to rotation matrix.
inline Mat3 quaternion_to_matrix(const std::array<double, 4>& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r.m = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
         2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  return r;
}

// Uniform rotation on SO(3): normalized 4d standard-normal quaternion.
inline std::array<double, 4> random_unit_quaternion(Rng& rng) {
  std::array<double, 4> q{};
  double n2 = 0.0;
  do {
    for (auto& c : q) c = rng.normal();
    n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
  } while (n2 < 1e-12);
  double inv = 1.0 / std::sqrt(n2);
  for (auto& c : q) c *= inv;
  return q;
}

}  // namespace risa
