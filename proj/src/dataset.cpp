#include "risa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "risa/error.hpp"
#include "risa/parallel.hpp"

namespace risa::data {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      fail(ErrorCode::ConfigParse, "unknown key '" + it.key() + "' in " + where);
}

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3)
    fail(ErrorCode::ConfigParse, "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json j;
  j["class_name"] = m.class_name;
  j["part_count"] = m.part_count;
  j["template_level"] = m.template_level;
  j["shapes"] = json::array();
  for (const auto& s : m.shapes) {
    json e;
    e["id"] = s.id;
    e["label"] = s.label;
    e["parts"] = s.parts;
    e["rotation"] = s.rotation;
    e["split"] = s.split;
    j["shapes"].push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string());
  out << j.dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FileNotFound, path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigParse, path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    reject_unknown_keys(j, {"class_name", "part_count", "template_level", "shapes"},
                        "manifest");
    m.class_name = j.at("class_name").get<std::string>();
    m.part_count = j.at("part_count").get<int>();
    m.template_level = j.at("template_level").get<int>();
    std::set<std::string> ids;
    for (const auto& e : j.at("shapes")) {
      reject_unknown_keys(e, {"id", "label", "parts", "rotation", "split"},
                          "manifest shape");
      ShapeEntry s;
      s.id = e.at("id").get<std::string>();
      s.label = e.at("label").get<std::string>();
      s.parts = e.at("parts").get<std::vector<std::string>>();
      auto rot = e.at("rotation").get<std::vector<double>>();
      if (rot.size() != 4)
        fail(ErrorCode::ConfigParse, "rotation must be a quaternion");
      std::copy(rot.begin(), rot.end(), s.rotation.begin());
      s.split = e.at("split").get<std::string>();
      if (s.split != "train" && s.split != "test")
        fail(ErrorCode::ConfigParse, "split must be train or test");
      if (static_cast<int>(s.parts.size()) != m.part_count)
        fail(ErrorCode::ConfigParse, "shape " + s.id + " has wrong part count");
      if (!ids.insert(s.id).second)
        fail(ErrorCode::ConfigParse, "duplicate shape id " + s.id);
      m.shapes.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigParse, path.string() + ": " + e.what());
  }
  return m;
}

FamilySpec tables3_spec() {
  FamilySpec spec;
  spec.class_name = "tables3";
  spec.template_level = 1;
  spec.noise_amp = 0.002;

  // The top is deliberately asymmetric along every axis (quadratic skew) so
  // its principal axes carry a stable orientation; it also dominates the
  // volume and becomes the body part.
  spec.parts.push_back({1, "top", {0, 0, 0.35}, {0.50, 0.40, 0.05}, 2,
                        {0.15, 0.15, 0.15}});
  const double lx = 0.38, ly = 0.28;
  spec.parts.push_back({2, "leg_a", {+lx, +ly, -0.075}, {0.045, 0.038, 0.375}, 2, {}});
  spec.parts.push_back({3, "leg_b", {+lx, -ly, -0.075}, {0.045, 0.038, 0.375}, 2, {}});
  spec.parts.push_back({4, "leg_c", {-lx, +ly, -0.075}, {0.045, 0.038, 0.375}, 2, {}});
  spec.parts.push_back({5, "leg_d", {-lx, -ly, -0.075}, {0.045, 0.038, 0.375}, 2, {}});

  auto legs = [](const std::string& profile, double amp_min, double amp_max,
                 double periods) {
    SubclassSpec sc;
    sc.rules.push_back({1.0, "straight", 0, 0, 0, 0.06});  // top
    for (int i = 0; i < 4; ++i)
      sc.rules.push_back({1.0, profile, amp_min, amp_max, periods, 0.06});
    return sc;
  };
  SubclassSpec straight = legs("straight", 0, 0, 0);
  straight.name = "straight-leg";
  SubclassSpec tapered = legs("taper", 0.35, 0.55, 0);
  tapered.name = "tapered-leg";
  SubclassSpec turned = legs("turn", 0.22, 0.32, 2.5);
  turned.name = "turned-leg";
  spec.subclasses = {straight, tapered, turned};
  return spec;
}

void save_family_spec(const FamilySpec& spec, const std::filesystem::path& path) {
  json j;
  j["class_name"] = spec.class_name;
  j["template_level"] = spec.template_level;
  j["noise_amp"] = spec.noise_amp;
  j["parts"] = json::array();
  for (const auto& p : spec.parts) {
    json e;
    e["label"] = p.label;
    e["name"] = p.name;
    e["center"] = vec3_to_json(p.center);
    e["half_extents"] = vec3_to_json(p.half_extents);
    e["axis"] = p.axis;
    e["skew"] = vec3_to_json(p.skew);
    j["parts"].push_back(std::move(e));
  }
  j["subclasses"] = json::array();
  for (const auto& sc : spec.subclasses) {
    json e;
    e["name"] = sc.name;
    e["rules"] = json::array();
    for (const auto& r : sc.rules) {
      json rj;
      rj["presence"] = r.presence;
      rj["profile"] = r.profile;
      rj["amp"] = json::array({r.amp_min, r.amp_max});
      rj["periods"] = r.periods;
      rj["jitter"] = r.jitter;
      e["rules"].push_back(std::move(rj));
    }
    j["subclasses"].push_back(std::move(e));
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string());
  out << j.dump(2) << '\n';
}

FamilySpec load_family_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FileNotFound, path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigParse, path.string() + ": " + e.what());
  }
  FamilySpec spec;
  try {
    reject_unknown_keys(
        j, {"class_name", "template_level", "noise_amp", "parts", "subclasses"},
        "family spec");
    spec.class_name = j.at("class_name").get<std::string>();
    spec.template_level = j.at("template_level").get<int>();
    spec.noise_amp = j.at("noise_amp").get<double>();
    for (const auto& e : j.at("parts")) {
      reject_unknown_keys(
          e, {"label", "name", "center", "half_extents", "axis", "skew"},
          "family spec part");
      PartProgram p;
      p.label = e.at("label").get<int>();
      p.name = e.at("name").get<std::string>();
      p.center = vec3_from_json(e.at("center"));
      p.half_extents = vec3_from_json(e.at("half_extents"));
      p.axis = e.at("axis").get<int>();
      p.skew = vec3_from_json(e.at("skew"));
      spec.parts.push_back(std::move(p));
    }
    for (const auto& e : j.at("subclasses")) {
      reject_unknown_keys(e, {"name", "rules"}, "family spec subclass");
      SubclassSpec sc;
      sc.name = e.at("name").get<std::string>();
      for (const auto& rj : e.at("rules")) {
        reject_unknown_keys(rj, {"presence", "profile", "amp", "periods", "jitter"},
                            "family spec rule");
        PartRule r;
        r.presence = rj.at("presence").get<double>();
        r.profile = rj.at("profile").get<std::string>();
        auto amp = rj.at("amp").get<std::vector<double>>();
        if (amp.size() != 2)
          fail(ErrorCode::ConfigParse, "amp must be [min, max]");
        r.amp_min = amp[0];
        r.amp_max = amp[1];
        r.periods = rj.at("periods").get<double>();
        r.jitter = rj.at("jitter").get<double>();
        sc.rules.push_back(std::move(r));
      }
      if (sc.rules.size() != spec.parts.size())
        fail(ErrorCode::ConfigParse,
             "subclass " + sc.name + " needs one rule per part");
      spec.subclasses.push_back(std::move(sc));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigParse, path.string() + ": " + e.what());
  }
  return spec;
}

namespace {

mesh::PartMesh deform_part(const mesh::PartMesh& tmpl, const PartProgram& prog,
                           const PartRule& rule, Rng& rng, double noise_amp,
                           int part_label) {
  const double amp = rng.uniform(rule.amp_min, rule.amp_max);
  Vec3 scale{1 + rule.jitter * rng.uniform(-1, 1),
             1 + rule.jitter * rng.uniform(-1, 1),
             1 + rule.jitter * rng.uniform(-1, 1)};

  std::vector<Vec3> verts = tmpl.vertices;
  const int ax = prog.axis;
  for (auto& v : verts) {
    double coords[3] = {v.x, v.y, v.z};
    double t = 0.5 - coords[ax];  // 0 at the profile start, 1 at the end
    double r = 1.0;
    if (rule.profile == "taper")
      r = 1.0 - amp * t;
    else if (rule.profile == "turn")
      r = 1.0 + amp * std::sin(2.0 * 3.14159265358979323846 * rule.periods * t);
    else if (rule.profile != "straight")
      fail(ErrorCode::ConfigParse, "unknown profile '" + rule.profile + "'");
    for (int k = 0; k < 3; ++k)
      if (k != ax) coords[k] *= r;
    for (int k = 0; k < 3; ++k) {
      coords[k] += prog.skew[k] * coords[k] * coords[k];
      coords[k] *= 2.0 * prog.half_extents[k] * scale[k];
    }
    v = Vec3{coords[0], coords[1], coords[2]} + prog.center;
    if (noise_amp > 0)
      v += Vec3{noise_amp * rng.uniform(-1, 1), noise_amp * rng.uniform(-1, 1),
                noise_amp * rng.uniform(-1, 1)};
  }

  mesh::PartMesh out =
      mesh::build_mesh(std::move(verts), tmpl.faces, part_label).mesh;
  auto lengths = mesh::edge_lengths(out);
  for (double l : lengths)
    if (l <= 1e-6)
      fail(ErrorCode::DegenerateDeformation,
           "part " + prog.name + " collapsed an edge");
  return out;
}

}  // namespace

DatasetManifest generate(const FamilySpec& spec, int per_subclass,
                         uint64_t seed, const std::filesystem::path& out_dir) {
  if (per_subclass < 2)
    fail(ErrorCode::ConfigParse, "need at least 2 shapes per sub-class");
  if (spec.subclasses.empty() || spec.parts.empty())
    fail(ErrorCode::ConfigParse, "family spec has no parts or sub-classes");
  std::filesystem::create_directories(out_dir);

  const mesh::PartMesh tmpl = mesh::subdivided_cube(spec.template_level);
  DatasetManifest manifest;
  manifest.class_name = spec.class_name;
  manifest.part_count = static_cast<int>(spec.parts.size());
  manifest.template_level = spec.template_level;

  Rng root_rng(Rng::mix(seed ^ 0x67656e65ULL));
  std::ofstream labels_out(out_dir / "labels.txt");
  if (!labels_out) fail(ErrorCode::IoError, "cannot write labels.txt");

  int serial = 0;
  for (size_t c = 0; c < spec.subclasses.size(); ++c) {
    const auto& sc = spec.subclasses[c];
    for (int s = 0; s < per_subclass; ++s, ++serial) {
      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "%s-%s-%03d", spec.class_name.c_str(),
                    sc.name.c_str(), s);
      ShapeEntry entry;
      entry.id = idbuf;
      entry.label = sc.name;
      Rng shape_rng = root_rng.fork(static_cast<uint64_t>(serial));
      for (size_t p = 0; p < spec.parts.size(); ++p) {
        Rng part_rng = shape_rng.fork(p);
        const auto& rule = sc.rules[p];
        if (part_rng.uniform() >= rule.presence) {
          entry.parts.push_back("missing");
          continue;
        }
        mesh::PartMesh part = deform_part(tmpl, spec.parts[p], rule, part_rng,
                                          spec.noise_amp, spec.parts[p].label);
        std::string fname =
            entry.id + "_" + std::to_string(spec.parts[p].label) + ".obj";
        mesh::write_obj(part, out_dir / fname);
        entry.parts.push_back(fname);
      }
      labels_out << entry.id << ' ' << entry.label << '\n';
      manifest.shapes.push_back(std::move(entry));
    }
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

void perturb_rotations(DatasetManifest& manifest,
                       const std::filesystem::path& root, uint64_t seed) {
  Rng root_rng(Rng::mix(seed ^ 0x726f74ULL));
  for (size_t s = 0; s < manifest.shapes.size(); ++s) {
    auto& entry = manifest.shapes[s];
    Rng rng = root_rng.fork(s);
    auto q = random_unit_quaternion(rng);
    entry.rotation = q;
    RigidTransform t;
    t.rotation = quaternion_to_matrix(q);
    for (const auto& rel : entry.parts) {
      if (rel == "missing") continue;
      mesh::PartMesh m = mesh::read_obj(root / rel);
      mesh::write_obj(mesh::apply_rigid(m, t), root / rel);
    }
  }
  save_manifest(manifest, root / "manifest.json");
}

void split(DatasetManifest& manifest, uint64_t seed) {
  std::map<std::string, std::vector<size_t>> by_label;
  for (size_t i = 0; i < manifest.shapes.size(); ++i)
    by_label[manifest.shapes[i].label].push_back(i);

  Rng rng(Rng::mix(seed ^ 0x73706c6974ULL));
  for (auto& [label, members] : by_label) {
    if (members.size() < 5)
      fail(ErrorCode::TooFewShapes,
           "sub-class " + label + " has fewer than 5 shapes");
    for (size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[rng.uniform_int(static_cast<int>(i))]);
    size_t n_test = members.size() / 5;
    for (size_t i = 0; i < members.size(); ++i)
      manifest.shapes[members[i]].split = i < n_test ? "test" : "train";
  }
}

DatasetManifest load_external(const std::filesystem::path& dir,
                              int template_level) {
  const auto labels_path = dir / "labels.txt";
  if (!std::filesystem::exists(labels_path))
    fail(ErrorCode::MissingLabels, labels_path.string() + " not found");
  std::ifstream in(labels_path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string id, label;
    if (!(ss >> id)) continue;
    if (!(ss >> label))
      fail(ErrorCode::MissingLabels, "no label for shape " + id);
    entries.emplace_back(id, label);
  }
  if (entries.empty())
    fail(ErrorCode::MissingLabels, "labels.txt lists no shapes");

  // Part count: largest part index named by any mesh file in the directory.
  int part_count = 0;
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    if (f.path().extension() != ".obj") continue;
    std::string stem = f.path().stem().string();
    auto us = stem.rfind('_');
    if (us == std::string::npos) continue;
    try {
      part_count = std::max(part_count, std::stoi(stem.substr(us + 1)));
    } catch (const std::exception&) {
    }
  }
  if (part_count == 0)
    fail(ErrorCode::FileNotFound, "no part meshes found in " + dir.string());

  const int expected_e = mesh::subdivided_cube(template_level).edge_count();
  DatasetManifest manifest;
  manifest.class_name = dir.filename().string();
  manifest.part_count = part_count;
  manifest.template_level = template_level;
  for (const auto& [id, label] : entries) {
    ShapeEntry e;
    e.id = id;
    e.label = label;
    for (int p = 1; p <= part_count; ++p) {
      std::string fname = id + "_" + std::to_string(p) + ".obj";
      if (!std::filesystem::exists(dir / fname)) {
        e.parts.push_back("missing");
        continue;
      }
      mesh::PartMesh m = mesh::read_obj(dir / fname, p);
      if (m.edge_count() != expected_e)
        fail(ErrorCode::ConnectivityMismatch,
             fname + " has " + std::to_string(m.edge_count()) +
                 " edges, template has " + std::to_string(expected_e));
      e.parts.push_back(fname);
    }
    manifest.shapes.push_back(std::move(e));
  }
  return manifest;
}

void normalize_lengths(geom::BaseFeature& f) {
  if (f.is_zero()) return;
  double mean = 0.0;
  for (int e = 0; e < f.edge_count; ++e) mean += f.at(e, 0);
  mean /= f.edge_count;
  for (int e = 0; e < f.edge_count; ++e) f.at(e, 0) /= mean;
}

FeatureSet extract_features(const DatasetManifest& manifest,
                            const std::filesystem::path& root,
                            bool scale_invariant_base) {
  FeatureSet fs;
  fs.part_count = manifest.part_count;
  fs.edge_count = mesh::subdivided_cube(manifest.template_level).edge_count();

  const size_t n = manifest.shapes.size();
  std::vector<std::vector<std::optional<mesh::PartMesh>>> meshes(n);
  parallel_for(n, [&](size_t s) {
    const auto& entry = manifest.shapes[s];
    auto& row = meshes[s];
    row.resize(manifest.part_count);
    for (int p = 0; p < manifest.part_count; ++p) {
      if (entry.parts[p] == "missing") continue;
      mesh::PartMesh m = mesh::read_obj(root / entry.parts[p], p + 1);
      if (m.edge_count() != fs.edge_count)
        fail(ErrorCode::ConnectivityMismatch,
             entry.parts[p] + " does not match the template connectivity");
      row[p] = std::move(m);
    }
  });

  std::vector<std::vector<const mesh::PartMesh*>> ptrs(n);
  for (size_t s = 0; s < n; ++s) {
    ptrs[s].resize(manifest.part_count, nullptr);
    for (int p = 0; p < manifest.part_count; ++p)
      if (meshes[s][p]) ptrs[s][p] = &*meshes[s][p];
  }
  fs.body_label = geom::select_body_part(ptrs);

  fs.inputs.resize(n);
  parallel_for(n, [&](size_t s) {
    model::ShapeInput input;
    const mesh::PartMesh& body = *ptrs[s][fs.body_label - 1];
    for (int p = 0; p < manifest.part_count; ++p) {
      geom::BaseFeature bf = geom::base_feature(ptrs[s][p], fs.edge_count);
      if (scale_invariant_base) normalize_lengths(bf);
      input.base.push_back(std::move(bf));
      input.structure.push_back(geom::structural_feature(ptrs[s][p], body));
      input.present.push_back(ptrs[s][p] != nullptr);
    }
    fs.inputs[s] = std::move(input);
  });

  for (const auto& entry : manifest.shapes) {
    fs.ids.push_back(entry.id);
    fs.labels.push_back(entry.label);
    fs.splits.push_back(entry.split);
  }
  return fs;
}

}  // namespace risa::data
