#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "risa/vec3.hpp"

namespace risa::mesh {

// Closed manifold triangle mesh with a canonical undirected edge list.
// Edges are sorted index pairs, ordered lexicographically, so feature rows
// align across meshes that share connectivity.
struct PartMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;  // CCW winding, outward normals
  std::vector<std::array<int, 2>> edges;  // canonical: sorted pairs, lexicographic order
  int part_label = 1;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }
  int edge_count() const { return static_cast<int>(edges.size()); }
};

// For edge i, n1[i] holds the two "first adjacent" edges (one per adjacent
// face, counter-clockwise immediately after i) and n2[i] the two "second
// adjacent" edges. Entry 0 comes from the face containing the canonical
// edge direction, entry 1 from the opposite face.
struct EdgeAdjacency {
  std::vector<std::array<int, 2>> n1;
  std::vector<std::array<int, 2>> n2;
};

struct BuiltMesh {
  PartMesh mesh;
  EdgeAdjacency adjacency;
};

// Validates manifoldness / winding / face sanity and produces the canonical
// edge list plus the 4-neighbor edge adjacency.
BuiltMesh build_mesh(std::vector<Vec3> vertices,
                     std::vector<std::array<int, 3>> faces, int part_label = 1);

EdgeAdjacency edge_adjacency(const PartMesh& mesh);

// Template family: triangulated unit cube (side 1, centered at the origin)
// refined by `level` rounds of midpoint 1-to-4 subdivision. Midpoints stay on
// the cube surface. Deterministic vertex and face ordering.
PartMesh subdivided_cube(int level);

// Interior angle between the two faces at each edge: pi when flat, < pi
// convex, > pi concave. See dihedral_angle_at for the exact convention.
std::vector<double> dihedral_angles(const PartMesh& mesh);

std::vector<double> edge_lengths(const PartMesh& mesh);

PartMesh apply_rigid(const PartMesh& mesh, const RigidTransform& transform);

RigidTransform random_rotation(uint64_t seed);

// Signed volume by the divergence theorem; positive for outward winding.
double signed_volume(const PartMesh& mesh);

// OBJ subset: `v x y z` and `f i j k` lines (1-based, triangles only).
// Comments and blank lines are skipped; anything else is rejected.
void write_obj(const PartMesh& mesh, const std::filesystem::path& path);
PartMesh read_obj(const std::filesystem::path& path, int part_label = 1);

}  // namespace risa::mesh
