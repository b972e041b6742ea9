#include "risa/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "risa/error.hpp"

namespace risa::mesh {

namespace {

std::array<int, 2> canonical(int a, int b) {
  return a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a};
}

// Directed edges of face (a,b,c) are (a,b), (b,c), (c,a).
struct DirectedUse {
  int face = -1;
  int slot = -1;  // which directed edge of the face, 0..2
};

}  // namespace

BuiltMesh build_mesh(std::vector<Vec3> vertices,
                     std::vector<std::array<int, 3>> faces, int part_label) {
  const int nv = static_cast<int>(vertices.size());
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= nv)
        fail(ErrorCode::DegenerateFace,
             "face " + std::to_string(f) + " references invalid vertex");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      fail(ErrorCode::DegenerateFace,
           "face " + std::to_string(f) + " repeats a vertex index");
  }

  // Each undirected edge must be used by exactly two faces, once per direction.
  std::map<std::array<int, 2>, std::array<DirectedUse, 2>> uses;
  std::map<std::array<int, 2>, int> use_count;
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      auto key = canonical(a, b);
      int dir = (a < b) ? 0 : 1;  // 0: canonical direction, 1: reversed
      int count = use_count[key]++;
      if (count >= 2)
        fail(ErrorCode::NonManifold, "edge (" + std::to_string(key[0]) + "," +
                                         std::to_string(key[1]) +
                                         ") used by more than 2 faces");
      auto& slots = uses[key];
      if (slots[dir].face >= 0)
        fail(ErrorCode::InconsistentWinding,
             "edge (" + std::to_string(key[0]) + "," + std::to_string(key[1]) +
                 ") traversed twice in the same direction");
      slots[dir] = {static_cast<int>(f), k};
    }
  }
  for (const auto& [key, count] : use_count)
    if (count != 2)
      fail(ErrorCode::NonManifold, "edge (" + std::to_string(key[0]) + "," +
                                       std::to_string(key[1]) +
                                       ") used by " + std::to_string(count) +
                                       " faces");

  PartMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.faces = std::move(faces);
  mesh.part_label = part_label;
  mesh.edges.reserve(uses.size());
  for (const auto& [key, _] : uses) mesh.edges.push_back(key);  // map is sorted

  std::map<std::array<int, 2>, int> edge_index;
  for (size_t i = 0; i < mesh.edges.size(); ++i)
    edge_index[mesh.edges[i]] = static_cast<int>(i);

  // Within each adjacent face, the edge after e (counter-clockwise) is the
  // first adjacent edge and the one after that is the second.
  EdgeAdjacency adj;
  adj.n1.resize(mesh.edges.size());
  adj.n2.resize(mesh.edges.size());
  for (size_t i = 0; i < mesh.edges.size(); ++i) {
    const auto& slots = uses[mesh.edges[i]];
    for (int side = 0; side < 2; ++side) {
      const auto& use = slots[side];
      const auto& t = mesh.faces[use.face];
      int s1 = (use.slot + 1) % 3, s2 = (use.slot + 2) % 3;
      adj.n1[i][side] = edge_index[canonical(t[s1], t[(s1 + 1) % 3])];
      adj.n2[i][side] = edge_index[canonical(t[s2], t[(s2 + 1) % 3])];
    }
  }
  return {std::move(mesh), std::move(adj)};
}

EdgeAdjacency edge_adjacency(const PartMesh& mesh) {
  return build_mesh(mesh.vertices, mesh.faces, mesh.part_label).adjacency;
}

PartMesh subdivided_cube(int level) {
  // Corner index: 4*(x>0) + 2*(y>0) + (z>0), coordinates in {-0.5, +0.5}.
  std::vector<Vec3> verts;
  verts.reserve(8);
  for (int i = 0; i < 8; ++i)
    verts.push_back({(i & 4) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5,
                     (i & 1) ? 0.5 : -0.5});
  std::vector<std::array<int, 3>> faces = {
      {0, 1, 3}, {0, 3, 2},  // -x
      {4, 6, 7}, {4, 7, 5},  // +x
      {0, 4, 5}, {0, 5, 1},  // -y
      {2, 3, 7}, {2, 7, 6},  // +y
      {0, 2, 6}, {0, 6, 4},  // -z
      {1, 5, 7}, {1, 7, 3},  // +z
  };

  for (int l = 0; l < level; ++l) {
    BuiltMesh built = build_mesh(verts, faces);
    const PartMesh& m = built.mesh;
    std::map<std::array<int, 2>, int> midpoint;
    std::vector<Vec3> nverts = m.vertices;
    for (size_t e = 0; e < m.edges.size(); ++e) {
      const auto& [a, b] = m.edges[e];
      midpoint[m.edges[e]] = static_cast<int>(nverts.size());
      nverts.push_back((m.vertices[a] + m.vertices[b]) * 0.5);
    }
    std::vector<std::array<int, 3>> nfaces;
    nfaces.reserve(m.faces.size() * 4);
    for (const auto& t : m.faces) {
      int mab = midpoint[canonical(t[0], t[1])];
      int mbc = midpoint[canonical(t[1], t[2])];
      int mca = midpoint[canonical(t[2], t[0])];
      nfaces.push_back({t[0], mab, mca});
      nfaces.push_back({mab, t[1], mbc});
      nfaces.push_back({mca, mbc, t[2]});
      nfaces.push_back({mab, mbc, mca});
    }
    verts = std::move(nverts);
    faces = std::move(nfaces);
  }

  return build_mesh(std::move(verts), std::move(faces)).mesh;
}

namespace {

Vec3 face_normal_checked(const PartMesh& mesh, int f) {
  const auto& t = mesh.faces[f];
  Vec3 n = cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                 mesh.vertices[t[2]] - mesh.vertices[t[0]]);
  double len = norm(n);
  if (len < 1e-14)
    fail(ErrorCode::ZeroAreaFace,
         "face " + std::to_string(f) + " has undefined normal");
  return n * (1.0 / len);
}

}  // namespace

std::vector<double> dihedral_angles(const PartMesh& mesh) {
  // For each canonical edge, find the face traversing it forward (face a)
  // and the face traversing it backward (face b).
  std::map<std::array<int, 2>, std::array<int, 2>> adjacent;  // [fwd, bwd]
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      auto key = canonical(a, b);
      auto it = adjacent.emplace(key, std::array<int, 2>{-1, -1}).first;
      it->second[a < b ? 0 : 1] = static_cast<int>(f);
    }
  }
  std::vector<double> angles(mesh.edges.size());
  for (size_t e = 0; e < mesh.edges.size(); ++e) {
    const auto& faces = adjacent.at(mesh.edges[e]);
    Vec3 na = face_normal_checked(mesh, faces[0]);
    Vec3 nb = face_normal_checked(mesh, faces[1]);
    Vec3 ehat = normalized(mesh.vertices[mesh.edges[e][1]] -
                           mesh.vertices[mesh.edges[e][0]]);
    // pi when flat, < pi convex, > pi concave; invariant under rigid motion.
    angles[e] = 3.14159265358979323846 - std::atan2(dot(cross(na, nb), ehat), dot(na, nb));
  }
  return angles;
}

std::vector<double> edge_lengths(const PartMesh& mesh) {
  std::vector<double> lengths(mesh.edges.size());
  for (size_t e = 0; e < mesh.edges.size(); ++e)
    lengths[e] =
        norm(mesh.vertices[mesh.edges[e][1]] - mesh.vertices[mesh.edges[e][0]]);
  return lengths;
}

PartMesh apply_rigid(const PartMesh& mesh, const RigidTransform& transform) {
  transform.validate();
  PartMesh out = mesh;
  for (auto& v : out.vertices) v = transform.apply(v);
  return out;
}

RigidTransform random_rotation(uint64_t seed) {
  Rng rng(seed);
  RigidTransform t;
  t.rotation = quaternion_to_matrix(random_unit_quaternion(rng));
  return t;
}

double signed_volume(const PartMesh& mesh) {
  double six_v = 0.0;
  for (const auto& t : mesh.faces)
    six_v += dot(cross(mesh.vertices[t[0]], mesh.vertices[t[1]]),
                 mesh.vertices[t[2]]);
  return six_v / 6.0;
}

void write_obj(const PartMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    out << buf;
  }
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

PartMesh read_obj(const std::filesystem::path& path, int part_label) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FileNotFound, path.string());
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> faces;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;  // blank
    if (tag[0] == '#') continue;
    auto where = [&] { return path.string() + ":" + std::to_string(lineno); };
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x >> v.y >> v.z))
        fail(ErrorCode::IoError, "malformed vertex at " + where());
      verts.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> f{};
      std::string tok;
      int n = 0;
      while (ss >> tok) {
        if (tok.find('/') != std::string::npos)
          fail(ErrorCode::IoError,
               "texture/normal indices not supported at " + where());
        if (n >= 3)
          fail(ErrorCode::IoError, "non-triangle face at " + where());
        f[n++] = std::stoi(tok) - 1;
      }
      if (n != 3) fail(ErrorCode::IoError, "non-triangle face at " + where());
      faces.push_back(f);
    } else {
      fail(ErrorCode::IoError, "unsupported directive '" + tag + "' at " + where());
    }
  }
  return build_mesh(std::move(verts), std::move(faces), part_label).mesh;
}

}  // namespace risa::mesh
