#pragma once

#include <array>
#include <optional>
#include <vector>

#include "risa/mesh.hpp"

namespace risa::geom {

// Per-edge (length, dihedral angle) matrix in canonical edge order.
// An all-zero matrix stands for a missing part.
struct BaseFeature {
  int edge_count = 0;
  std::vector<double> data;  // E x 2, row-major

  static BaseFeature zero(int edge_count) {
    return {edge_count, std::vector<double>(2 * edge_count, 0.0)};
  }

  double& at(int e, int c) { return data[2 * e + c]; }
  double at(int e, int c) const { return data[2 * e + c]; }

  bool is_zero() const {
    for (double v : data)
      if (v != 0.0) return false;
    return true;
  }
};

BaseFeature base_feature(const mesh::PartMesh* part, int template_edge_count);

// Vertex-covariance principal axes, descending eigenvalue order. Axis signs
// fixed by the third central moment of vertex projections (>= 0), falling
// back to a positive largest-magnitude component when the moment vanishes.
struct PrincipalFrame {
  std::array<Vec3, 3> axes;
  std::array<double, 3> eigenvalues;
  Vec3 centroid;
};

PrincipalFrame principal_frame(const mesh::PartMesh& part);

// 11 numbers per part: existence, center distance to the body part,
// |cos| between the part's first two principal axes and the body's three,
// and the body-frame unit direction from body center to part center.
struct StructuralFeature {
  std::array<double, 11> sv{};
};

StructuralFeature structural_feature(const mesh::PartMesh* part,
                                     const mesh::PartMesh& body);

// Among part labels present in every shape, the one with the largest mean
// signed volume; ties break to the smallest label. `parts[s][p]` is the part
// with label p+1 of shape s, or nullptr when missing.
int select_body_part(const std::vector<std::vector<const mesh::PartMesh*>>& parts);

}  // namespace risa::geom
