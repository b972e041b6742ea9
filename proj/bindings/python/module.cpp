#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "risa/cli.hpp"
#include "risa/dataset.hpp"
#include "risa/retrieval.hpp"

namespace py = pybind11;
using namespace risa;

namespace {

mesh::PartMesh mesh_from_lists(
    const std::vector<std::array<double, 3>>& vertices,
    const std::vector<std::array<int, 3>>& faces) {
  std::vector<Vec3> v;
  v.reserve(vertices.size());
  for (const auto& p : vertices) v.push_back({p[0], p[1], p[2]});
  return mesh::build_mesh(std::move(v), faces).mesh;
}

std::vector<std::vector<double>> base_feature_rows(const mesh::PartMesh& m) {
  geom::BaseFeature f = geom::base_feature(&m, m.edge_count());
  std::vector<std::vector<double>> rows(f.edge_count);
  for (int e = 0; e < f.edge_count; ++e) rows[e] = {f.at(e, 0), f.at(e, 1)};
  return rows;
}

retr::DescriptorIndex make_index(
    const std::vector<std::string>& ids, const std::vector<std::string>& labels,
    const std::vector<std::vector<double>>& descriptors) {
  retr::DescriptorIndex index;
  for (size_t i = 0; i < ids.size(); ++i)
    index.add(ids[i], labels[i], descriptors[i]);
  index.freeze();
  return index;
}

}  // namespace

PYBIND11_MODULE(risanet, m) {
  m.doc() = "Rotation-invariant part-based shape descriptors and retrieval";

  py::register_exception<Error>(m, "RisaError");

  py::class_<mesh::PartMesh>(m, "PartMesh")
      .def_property_readonly("vertex_count", &mesh::PartMesh::vertex_count)
      .def_property_readonly("edge_count", &mesh::PartMesh::edge_count)
      .def_property_readonly("face_count", &mesh::PartMesh::face_count)
      .def_property_readonly("vertices",
                             [](const mesh::PartMesh& pm) {
                               std::vector<std::array<double, 3>> out;
                               for (const auto& v : pm.vertices)
                                 out.push_back({v.x, v.y, v.z});
                               return out;
                             })
      .def_property_readonly("faces",
                             [](const mesh::PartMesh& pm) { return pm.faces; })
      .def_property_readonly("edges",
                             [](const mesh::PartMesh& pm) { return pm.edges; });

  m.def("build_mesh", &mesh_from_lists, py::arg("vertices"), py::arg("faces"),
        "Validate a closed manifold triangle mesh and canonicalize its edges");
  m.def("subdivided_cube", &mesh::subdivided_cube, py::arg("level"));
  m.def("edge_lengths", &mesh::edge_lengths, py::arg("mesh"));
  m.def("dihedral_angles", &mesh::dihedral_angles, py::arg("mesh"));
  m.def("base_feature", &base_feature_rows, py::arg("mesh"),
        "Per-edge (length, dihedral angle) rows in canonical edge order");
  m.def(
      "random_rotation",
      [](uint64_t seed) {
        RigidTransform t = mesh::random_rotation(seed);
        std::array<std::array<double, 3>, 3> r;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) r[i][j] = t.rotation(i, j);
        return r;
      },
      py::arg("seed"), "Uniform SO(3) rotation matrix, deterministic per seed");
  m.def(
      "apply_rigid",
      [](const mesh::PartMesh& pm, const std::array<std::array<double, 3>, 3>& r,
         const std::array<double, 3>& t) {
        RigidTransform rt;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) rt.rotation(i, j) = r[i][j];
        rt.translation = {t[0], t[1], t[2]};
        return mesh::apply_rigid(pm, rt);
      },
      py::arg("mesh"), py::arg("rotation"),
      py::arg("translation") = std::array<double, 3>{0, 0, 0});

  m.def(
      "generate_dataset",
      [](const std::string& spec, const std::string& out_dir, uint64_t seed,
         int counts, bool rotate) {
        data::FamilySpec fs = spec == "tables3" ? data::tables3_spec()
                                                : data::load_family_spec(spec);
        auto manifest = data::generate(fs, counts, seed, out_dir);
        if (rotate) data::perturb_rotations(manifest, out_dir, Rng::mix(seed + 1));
        data::split(manifest, Rng::mix(seed + 2));
        data::save_manifest(manifest,
                            std::filesystem::path(out_dir) / "manifest.json");
        return (std::filesystem::path(out_dir) / "manifest.json").string();
      },
      py::arg("spec") = "tables3", py::arg("out_dir"), py::arg("seed") = 0,
      py::arg("counts") = 20, py::arg("rotate") = true);

  m.def(
      "evaluate",
      [](const std::vector<std::string>& ids,
         const std::vector<std::string>& labels,
         const std::vector<std::vector<double>>& descriptors) {
        auto index = make_index(ids, labels, descriptors);
        std::vector<retr::QueryItem> queries;
        for (size_t i = 0; i < ids.size(); ++i)
          queries.push_back({ids[i], labels[i], descriptors[i]});
        retr::EvalReport r = retr::evaluate(index, queries);
        py::dict out;
        auto pack = [](const retr::MetricSet& s) {
          py::dict d;
          d["NN"] = s.nn;
          d["FT"] = s.ft;
          d["ST"] = s.st;
          d["NDCG"] = s.ndcg;
          d["mAP"] = s.map;
          return d;
        };
        out["micro"] = pack(r.micro);
        out["macro"] = pack(r.macro);
        out["skipped_queries"] = r.skipped_queries;
        return out;
      },
      py::arg("ids"), py::arg("labels"), py::arg("descriptors"),
      "Leave-one-out retrieval metrics over a descriptor pool");

  m.def(
      "query",
      [](const std::vector<std::string>& ids,
         const std::vector<std::string>& labels,
         const std::vector<std::vector<double>>& descriptors,
         const std::string& query_id, int k) {
        auto index = make_index(ids, labels, descriptors);
        auto it = std::find(ids.begin(), ids.end(), query_id);
        if (it == ids.end())
          throw Error(ErrorCode::EmptyIndex, "unknown query id " + query_id);
        auto ranked = retr::query(
            index, descriptors[static_cast<size_t>(it - ids.begin())], query_id);
        std::vector<std::tuple<std::string, std::string, double>> out;
        for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(k); ++i)
          out.emplace_back(ranked[i].id, ranked[i].label, ranked[i].distance);
        return out;
      },
      py::arg("ids"), py::arg("labels"), py::arg("descriptors"),
      py::arg("query_id"), py::arg("k") = 5);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) { return cli::run(args); },
      py::arg("args"),
      "Invoke the full command-line surface (gen/train/embed/query/eval)");
}
