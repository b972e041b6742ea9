#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "risa/mesh.hpp"
#include "risa/model.hpp"

namespace risa::data {

struct ShapeEntry {
  std::string id;
  std::string label;
  std::vector<std::string> parts;  // relative path or "missing", slot p-1
  std::array<double, 4> rotation{1, 0, 0, 0};
  std::string split = "train";
};

struct DatasetManifest {
  std::string class_name;
  int part_count = 0;
  int template_level = 1;
  std::vector<ShapeEntry> shapes;
};

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Deformation program of one template part: an anchor box plus a radial
// profile running along one axis and a per-axis quadratic skew.
struct PartProgram {
  int label = 1;
  std::string name;
  Vec3 center;
  Vec3 half_extents{0.5, 0.5, 0.5};
  int axis = 2;
  Vec3 skew;
};

struct PartRule {
  double presence = 1.0;
  std::string profile = "straight";  // straight | taper | turn
  double amp_min = 0.0, amp_max = 0.0;
  double periods = 0.0;
  double jitter = 0.0;  // per-axis relative size jitter
};

struct SubclassSpec {
  std::string name;
  std::vector<PartRule> rules;  // one per part, same order
};

struct FamilySpec {
  std::string class_name;
  int template_level = 1;
  double noise_amp = 0.0;
  std::vector<PartProgram> parts;
  std::vector<SubclassSpec> subclasses;
};

FamilySpec tables3_spec();
FamilySpec load_family_spec(const std::filesystem::path& path);
void save_family_spec(const FamilySpec& spec, const std::filesystem::path& path);

// Writes one OBJ per present part plus labels.txt under out_dir and returns
// the manifest (identity rotations, everything in the train split).
// Deterministic per seed, byte for byte.
DatasetManifest generate(const FamilySpec& spec, int per_subclass,
                         uint64_t seed, const std::filesystem::path& out_dir);

// One uniform SO(3) rotation per shape applied jointly to all of its parts;
// the quaternion is recorded in the manifest and the OBJ files are rewritten.
void perturb_rotations(DatasetManifest& manifest,
                       const std::filesystem::path& root, uint64_t seed);

// Stratified 4:1 train/test split per sub-class.
void split(DatasetManifest& manifest, uint64_t seed);

// Loads pre-segmented meshes named <shape>_<part>.obj with a labels.txt of
// "<shape> <label>" lines. Missing files become missing parts.
DatasetManifest load_external(const std::filesystem::path& dir,
                              int template_level);

struct FeatureSet {
  std::vector<model::ShapeInput> inputs;
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::vector<std::string> splits;
  int body_label = 0;
  int edge_count = 0;
  int part_count = 0;
};

// Base + structural features for every shape of a dataset. The body part is
// chosen dataset-wide (common label with the largest mean volume).
FeatureSet extract_features(const DatasetManifest& manifest,
                            const std::filesystem::path& root,
                            bool scale_invariant_base);

// Applies the scale-invariant option to a raw base feature: edge lengths are
// divided by their mean so only relative sizes remain.
void normalize_lengths(geom::BaseFeature& f);

}  // namespace risa::data
