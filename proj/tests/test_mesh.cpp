#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "risa/mesh.hpp"

using namespace risa;
using mesh::PartMesh;

namespace {

constexpr double kPi = 3.14159265358979323846;

mesh::BuiltMesh tetrahedron() {
  std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<std::array<int, 3>> f = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return mesh::build_mesh(v, f);
}

}  // namespace

TEST_CASE("tetrahedron adjacency") {
  auto built = tetrahedron();
  CHECK(built.mesh.edge_count() == 6);
  CHECK(built.mesh.vertex_count() - built.mesh.edge_count() +
            built.mesh.face_count() ==
        2);
  for (int e = 0; e < 6; ++e) {
    std::set<int> nbrs{built.adjacency.n1[e][0], built.adjacency.n1[e][1],
                       built.adjacency.n2[e][0], built.adjacency.n2[e][1]};
    CHECK(nbrs.size() == 4);
    CHECK(nbrs.count(e) == 0);
  }
}

TEST_CASE("adjacency symmetry") {
  for (int level : {0, 1}) {
    PartMesh m = mesh::subdivided_cube(level);
    auto adj = mesh::edge_adjacency(m);
    for (int e = 0; e < m.edge_count(); ++e) {
      for (int n : {adj.n1[e][0], adj.n1[e][1], adj.n2[e][0], adj.n2[e][1]}) {
        std::set<int> back{adj.n1[n][0], adj.n1[n][1], adj.n2[n][0],
                           adj.n2[n][1]};
        CHECK(back.count(e) == 1);
      }
    }
  }
}

TEST_CASE("subdivided cube counts") {
  // Oracle: V' = V + E, E' = 2E + 3F, F' = 4F from midpoint subdivision,
  // checked against Euler's formula at each level.
  int v = 8, e = 18, f = 12;
  for (int level = 0; level <= 2; ++level) {
    PartMesh m = mesh::subdivided_cube(level);
    CHECK(m.vertex_count() == v);
    CHECK(m.edge_count() == e);
    CHECK(m.face_count() == f);
    CHECK(m.vertex_count() - m.edge_count() + m.face_count() == 2);
    int nv = v + e, ne = 2 * e + 3 * f, nf = 4 * f;
    v = nv;
    e = ne;
    f = nf;
  }
  CHECK(mesh::subdivided_cube(1).vertex_count() == 26);
  CHECK(mesh::subdivided_cube(1).edge_count() == 72);
  CHECK(mesh::subdivided_cube(1).face_count() == 48);
  CHECK(mesh::subdivided_cube(2).vertex_count() == 98);
  CHECK(mesh::subdivided_cube(2).edge_count() == 288);
  CHECK(mesh::subdivided_cube(2).face_count() == 192);
}

TEST_CASE("build_mesh rejects bad input") {
  std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  SUBCASE("non-manifold edge") {
    // Two faces plus a third reusing edge (0,1).
    std::vector<std::array<int, 3>> f = {{0, 2, 1}, {0, 1, 3}, {0, 1, 2}};
    CHECK_THROWS_WITH_AS(mesh::build_mesh(v, f), doctest::Contains("edge"),
                         Error);
    try {
      mesh::build_mesh(v, f);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonManifold);
    }
  }

  SUBCASE("inconsistent winding") {
    auto f = tetrahedron().mesh.faces;
    std::swap(f[0][0], f[0][1]);  // flip one face
    try {
      mesh::build_mesh(v, f);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InconsistentWinding);
    }
  }

  SUBCASE("degenerate face") {
    std::vector<std::array<int, 3>> f = {{0, 0, 1}};
    try {
      mesh::build_mesh(v, f);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateFace);
    }
  }
}

TEST_CASE("dihedral angles") {
  SUBCASE("cube edges are right angles or flat") {
    PartMesh m = mesh::subdivided_cube(0);
    auto angles = mesh::dihedral_angles(m);
    auto lengths = mesh::edge_lengths(m);
    int corner = 0, flat = 0;
    for (int e = 0; e < m.edge_count(); ++e) {
      if (std::abs(lengths[e] - 1.0) < 1e-12) {
        CHECK(angles[e] == doctest::Approx(kPi / 2).epsilon(1e-12));
        ++corner;
      } else {
        CHECK(lengths[e] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
        CHECK(angles[e] == doctest::Approx(kPi).epsilon(1e-12));
        ++flat;
      }
    }
    CHECK(corner == 12);
    CHECK(flat == 6);
  }

  SUBCASE("concave hinge is 3*pi/2") {
    // Hand-assembled two-triangle hinge (only the shared edge is listed, so
    // the open boundary never enters the angle computation). Face (0,1,2)
    // lies in z=0 with outward normal +z, face (1,0,3) in y=0 with outward
    // normal +y; the material side spans 270 degrees at edge (0,1).
    PartMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0.5, 1, 0}, {0.5, 0, 1}};
    m.faces = {{0, 1, 2}, {1, 0, 3}};
    m.edges = {{0, 1}};
    auto angles = mesh::dihedral_angles(m);
    CHECK(angles[0] == doctest::Approx(1.5 * kPi).epsilon(1e-12));
  }

  SUBCASE("coplanar pair is flat") {
    PartMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    m.edges = {{0, 2}};
    auto angles = mesh::dihedral_angles(m);
    CHECK(angles[0] == doctest::Approx(kPi).epsilon(1e-12));
  }
}

TEST_CASE("edge lengths and scaling") {
  PartMesh m = mesh::subdivided_cube(0);
  auto lengths = mesh::edge_lengths(m);
  int unit = 0, diag = 0;
  for (double l : lengths) {
    if (std::abs(l - 1.0) < 1e-12) ++unit;
    if (std::abs(l - std::sqrt(2.0)) < 1e-12) ++diag;
  }
  CHECK(unit == 12);
  CHECK(diag == 6);

  PartMesh scaled = m;
  for (auto& v : scaled.vertices) v = v * 3.0;
  auto scaled_lengths = mesh::edge_lengths(scaled);
  auto angles = mesh::dihedral_angles(m);
  auto scaled_angles = mesh::dihedral_angles(scaled);
  for (int e = 0; e < m.edge_count(); ++e) {
    CHECK(std::abs(scaled_lengths[e] / lengths[e] - 3.0) <= 1e-12);
    CHECK(std::abs(scaled_angles[e] - angles[e]) <= 1e-12);
  }
}

TEST_CASE("rigid transforms") {
  SUBCASE("identity is bit-exact") {
    PartMesh m = mesh::subdivided_cube(1);
    PartMesh out = mesh::apply_rigid(m, RigidTransform{});
    for (int i = 0; i < m.vertex_count(); ++i) {
      CHECK(out.vertices[i].x == m.vertices[i].x);
      CHECK(out.vertices[i].y == m.vertices[i].y);
      CHECK(out.vertices[i].z == m.vertices[i].z);
    }
  }

  SUBCASE("random rotation is orthonormal and deterministic") {
    RigidTransform a = mesh::random_rotation(7);
    a.validate();
    RigidTransform b = mesh::random_rotation(7);
    for (int i = 0; i < 9; ++i) CHECK(a.rotation.m[i] == b.rotation.m[i]);
    RigidTransform c = mesh::random_rotation(8);
    bool same = true;
    for (int i = 0; i < 9; ++i) same = same && a.rotation.m[i] == c.rotation.m[i];
    CHECK_FALSE(same);
  }

  SUBCASE("invalid rotation rejected") {
    RigidTransform t;
    t.rotation(0, 0) = 2.0;
    PartMesh m = mesh::subdivided_cube(0);
    try {
      mesh::apply_rigid(m, t);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidRotation);
    }
  }

  SUBCASE("lengths and angles are rigid invariants") {
    PartMesh m = mesh::subdivided_cube(1);
    auto lengths = mesh::edge_lengths(m);
    auto angles = mesh::dihedral_angles(m);
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
      RigidTransform t = mesh::random_rotation(1000 + trial);
      t.translation = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
      PartMesh moved = mesh::apply_rigid(m, t);
      auto ml = mesh::edge_lengths(moved);
      auto ma = mesh::dihedral_angles(moved);
      for (int e = 0; e < m.edge_count(); ++e) {
        CHECK(std::abs(ml[e] - lengths[e]) <= 1e-9);
        CHECK(std::abs(ma[e] - angles[e]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("deterministic canonical ordering") {
  PartMesh a = mesh::subdivided_cube(1);
  PartMesh b = mesh::subdivided_cube(1);
  CHECK(a.edges == b.edges);
  CHECK(a.faces == b.faces);
  for (int i = 0; i < a.vertex_count(); ++i) {
    CHECK(a.vertices[i].x == b.vertices[i].x);
    CHECK(a.vertices[i].y == b.vertices[i].y);
    CHECK(a.vertices[i].z == b.vertices[i].z);
  }
}

TEST_CASE("obj round trip and rejection") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "risa_mesh_test";
  fs::create_directories(dir);

  SUBCASE("round trip") {
    PartMesh m = mesh::subdivided_cube(1);
    mesh::write_obj(m, dir / "cube.obj");
    PartMesh back = mesh::read_obj(dir / "cube.obj");
    REQUIRE(back.vertex_count() == m.vertex_count());
    for (int i = 0; i < m.vertex_count(); ++i) {
      CHECK(back.vertices[i].x == m.vertices[i].x);
      CHECK(back.vertices[i].y == m.vertices[i].y);
      CHECK(back.vertices[i].z == m.vertices[i].z);
    }
    CHECK(back.faces == m.faces);
  }

  SUBCASE("rejects quads and attribute indices") {
    {
      std::ofstream f(dir / "quad.obj");
      f << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
    }
    CHECK_THROWS_AS(mesh::read_obj(dir / "quad.obj"), Error);
    {
      std::ofstream f(dir / "tex.obj");
      f << "v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1/1 2/2 3/3\n";
    }
    CHECK_THROWS_AS(mesh::read_obj(dir / "tex.obj"), Error);
    {
      std::ofstream f(dir / "vn.obj");
      f << "vn 0 0 1\n";
    }
    CHECK_THROWS_AS(mesh::read_obj(dir / "vn.obj"), Error);
  }
}

TEST_CASE("signed volume of the unit cube") {
  CHECK(mesh::signed_volume(mesh::subdivided_cube(0)) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mesh::signed_volume(mesh::subdivided_cube(1)) ==
        doctest::Approx(1.0).epsilon(1e-9));
}
