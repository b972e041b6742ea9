// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier end-to-end checks train on the synthetic "tables3"
// dataset with the default hyper-parameters.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <vector>

#include "risa/cli.hpp"
#include "risa/dataset.hpp"
#include "risa/parallel.hpp"
#include "risa/retrieval.hpp"
#include "risa/train.hpp"

using namespace risa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct CriterionResult {
  int number = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Check {
  bool ok = true;
  std::string why;
  void require(bool cond, const std::string& msg) {
    if (!cond && ok) {
      ok = false;
      why = msg;
    }
  }
};

// ---------------------------------------------------------------------------
// Shared fixtures: the generated dataset and the trained models.
// ---------------------------------------------------------------------------

struct Fixture {
  fs::path root;
  data::DatasetManifest manifest;
  data::FeatureSet features;
  mesh::EdgeAdjacency adjacency;
  model::ModelConfig model_cfg;

  nn::ParamStore main_model;     // VAE + structure
  nn::ParamStore ae_model;       // autoencoder ablation
  nn::ParamStore nostruct_model; // geometry-only ablation
  double main_seconds = 0, ae_seconds = 0, nostruct_seconds = 0;
  int epochs = 0;
};

constexpr int kTrainEpochs = 360;
constexpr uint64_t kSeed = 20240917;

train::TrainConfig default_train_config() {
  train::TrainConfig tc;  // lr 1e-5, batch 8, gamma 1e5, lambdas 1e3/1e2/1e2,
  tc.epochs = kTrainEpochs;  // eta 0.3 are the struct defaults
  tc.seed = kSeed;
  tc.checkpoint_every = 0;
  tc.convergence_window = kTrainEpochs + 1;  // run the full budget
  return tc;
}

void train_variant(Fixture& fx, model::ModelConfig cfg, nn::ParamStore* store,
                   double* seconds) {
  auto t0 = Clock::now();
  std::vector<model::ShapeInput> inputs;
  std::vector<std::string> labels;
  const data::FeatureSet& feats = fx.features;
  for (size_t i = 0; i < feats.inputs.size(); ++i) {
    if (feats.splits[i] != "train") continue;
    inputs.push_back(feats.inputs[i]);
    labels.push_back(feats.labels[i]);
  }
  model::init_params(*store, cfg, kSeed);
  train::TrainConfig tc = default_train_config();
  train::train(*store, cfg, fx.adjacency, inputs, labels, tc);
  *seconds = seconds_since(t0);
}

Fixture build_fixture() {
  Fixture fx;
  fx.root = fs::temp_directory_path() / "risa_acceptance";
  fs::remove_all(fx.root);
  fs::create_directories(fx.root);

  std::cerr << "-- generating tables3 (3 sub-classes x 20 shapes, level 1)\n";
  data::FamilySpec spec = data::tables3_spec();
  fx.manifest = data::generate(spec, 20, kSeed, fx.root);
  data::perturb_rotations(fx.manifest, fx.root, kSeed + 1);
  data::split(fx.manifest, kSeed + 2);
  data::save_manifest(fx.manifest, fx.root / "manifest.json");
  fx.features = data::extract_features(fx.manifest, fx.root, false);
  fx.adjacency = mesh::edge_adjacency(mesh::subdivided_cube(1));

  fx.model_cfg.part_count = fx.features.part_count;
  fx.model_cfg.edge_count = fx.features.edge_count;
  fx.model_cfg.template_level = 1;
  fx.epochs = kTrainEpochs;

  std::cerr << "-- training the full model (" << kTrainEpochs << " epochs)\n";
  train_variant(fx, fx.model_cfg, &fx.main_model, &fx.main_seconds);
  std::cerr << "   " << fx.main_seconds << " s\n";

  std::cerr << "-- training the autoencoder ablation\n";
  model::ModelConfig ae = fx.model_cfg;
  ae.vae = false;
  train_variant(fx, ae, &fx.ae_model, &fx.ae_seconds);
  std::cerr << "   " << fx.ae_seconds << " s\n";

  std::cerr << "-- training the structure-off ablation\n";
  model::ModelConfig ns = fx.model_cfg;
  ns.use_structure = false;
  train_variant(fx, ns, &fx.nostruct_model, &fx.nostruct_seconds);
  std::cerr << "   " << fx.nostruct_seconds << " s\n";
  return fx;
}

retr::DescriptorIndex embed_split(Fixture& fx, nn::ParamStore& store,
                                  const model::ModelConfig& cfg,
                                  const std::string& split) {
  std::vector<size_t> keep;
  for (size_t i = 0; i < fx.features.inputs.size(); ++i)
    if (split == "all" || fx.features.splits[i] == split) keep.push_back(i);
  std::vector<std::vector<double>> descs(keep.size());
  parallel_for(keep.size(), [&](size_t i) {
    descs[i] =
        model::descriptor(store, cfg, fx.adjacency, fx.features.inputs[keep[i]]);
  });
  retr::DescriptorIndex index;
  for (size_t i = 0; i < keep.size(); ++i)
    index.add(fx.features.ids[keep[i]], fx.features.labels[keep[i]],
              std::move(descs[i]));
  index.freeze();
  return index;
}

std::vector<retr::QueryItem> index_queries(const retr::DescriptorIndex& idx) {
  std::vector<retr::QueryItem> out;
  for (size_t i = 0; i < idx.size(); ++i)
    out.push_back({idx.ids()[i], idx.labels()[i], idx.descriptors()[i]});
  return out;
}

// ---------------------------------------------------------------------------
// Criterion 1: rigid invariance of features and descriptors.
// ---------------------------------------------------------------------------

CriterionResult criterion_rigid_invariance(Fixture& fx) {
  auto t0 = Clock::now();
  Check c;

  // Feature-level invariance on real generated parts.
  std::vector<mesh::PartMesh> parts;
  const auto& entry = fx.manifest.shapes.front();
  for (int p = 0; p < fx.manifest.part_count; ++p)
    parts.push_back(mesh::read_obj(fx.root / entry.parts[p], p + 1));
  const mesh::PartMesh& body = parts[fx.features.body_label - 1];

  std::vector<geom::BaseFeature> base_ref;
  std::vector<geom::StructuralFeature> sv_ref;
  for (const auto& p : parts) {
    base_ref.push_back(geom::base_feature(&p, fx.features.edge_count));
    sv_ref.push_back(geom::structural_feature(&p, body));
  }

  Rng rng(kSeed + 77);
  std::vector<char> results(100, 1);
  parallel_for(100, [&](size_t trial) {
    RigidTransform t = mesh::random_rotation(kSeed + 500 + trial);
    Rng local(kSeed + 900 + trial);
    t.translation = {local.uniform(-3, 3), local.uniform(-3, 3),
                     local.uniform(-3, 3)};
    std::vector<mesh::PartMesh> moved;
    for (const auto& p : parts) moved.push_back(mesh::apply_rigid(p, t));
    const mesh::PartMesh& mbody = moved[fx.features.body_label - 1];
    for (size_t p = 0; p < parts.size(); ++p) {
      geom::BaseFeature bf =
          geom::base_feature(&moved[p], fx.features.edge_count);
      for (size_t i = 0; i < bf.data.size(); ++i)
        if (std::abs(bf.data[i] - base_ref[p].data[i]) > 1e-9) results[trial] = 0;
      geom::StructuralFeature sv = geom::structural_feature(&moved[p], mbody);
      for (int i = 0; i < 11; ++i)
        if (std::abs(sv.sv[i] - sv_ref[p].sv[i]) > 1e-6) results[trial] = 0;
    }
  });
  for (char ok : results) c.require(ok, "feature invariance exceeded tolerance");

  // Descriptor invariance with the trained model.
  model::ShapeInput ref_input = fx.features.inputs.front();
  auto ref_desc =
      model::descriptor(fx.main_model, fx.model_cfg, fx.adjacency, ref_input);
  double ref_norm = 0;
  for (double v : ref_desc) ref_norm += v * v;
  ref_norm = std::sqrt(ref_norm);
  c.require(ref_norm > 0, "descriptor is identically zero");

  std::vector<char> desc_ok(50, 1);
  parallel_for(50, [&](size_t trial) {
    RigidTransform t = mesh::random_rotation(kSeed + 4000 + trial);
    std::vector<mesh::PartMesh> moved;
    for (const auto& rel : entry.parts)
      moved.push_back(mesh::read_obj(fx.root / rel));
    for (auto& m : moved) m = mesh::apply_rigid(m, t);
    model::ShapeInput input;
    const mesh::PartMesh& mbody = moved[fx.features.body_label - 1];
    for (size_t p = 0; p < moved.size(); ++p) {
      input.base.push_back(
          geom::base_feature(&moved[p], fx.features.edge_count));
      input.structure.push_back(geom::structural_feature(&moved[p], mbody));
      input.present.push_back(true);
    }
    auto desc =
        model::descriptor(fx.main_model, fx.model_cfg, fx.adjacency, input);
    double diff = 0;
    for (size_t i = 0; i < desc.size(); ++i)
      diff += (desc[i] - ref_desc[i]) * (desc[i] - ref_desc[i]);
    if (std::sqrt(diff) / ref_norm > 1e-6) desc_ok[trial] = 0;
  });
  for (char ok : desc_ok)
    c.require(ok, "descriptor invariance exceeded 1e-6 relative");

  double secs = seconds_since(t0);
  c.require(secs < 60.0, "suite exceeded 60 s");
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "100 feature transforms, 50 descriptor transforms, %.1f s",
                secs);
  return {1, "rigid-invariance suite", c.ok, c.ok ? buf : c.why, secs};
}

// ---------------------------------------------------------------------------
// Criterion 2: scale sensitivity.
// ---------------------------------------------------------------------------

CriterionResult criterion_scale(Fixture&) {
  auto t0 = Clock::now();
  Check c;
  mesh::PartMesh m = mesh::subdivided_cube(1);
  auto lengths = mesh::edge_lengths(m);
  auto angles = mesh::dihedral_angles(m);
  for (double s : {0.25, 0.5, 2.0, 3.7, 11.0}) {
    mesh::PartMesh scaled = m;
    for (auto& v : scaled.vertices) v = v * s;
    auto ls = mesh::edge_lengths(scaled);
    auto as = mesh::dihedral_angles(scaled);
    for (size_t e = 0; e < lengths.size(); ++e) {
      c.require(std::abs(ls[e] / (s * lengths[e]) - 1.0) <= 1e-12,
                "edge length not scaled linearly");
      c.require(std::abs(as[e] - angles[e]) <= 1e-12,
                "dihedral angle changed under scaling");
    }
  }
  return {2, "scale sensitivity", c.ok,
          c.ok ? "5 scales, 72 edges each" : c.why, seconds_since(t0)};
}

// ---------------------------------------------------------------------------
// Criterion 3: finite-difference gradient oracle.
// ---------------------------------------------------------------------------

using LossFn = std::function<nn::VarId(nn::Tape&, const std::vector<nn::VarId>&)>;

bool fd_check(const std::vector<nn::Tensor>& inputs, const LossFn& fn,
              double rel_tol, std::string* why) {
  const double h = 1e-6;
  auto eval = [&](const std::vector<nn::Tensor>& xs) {
    nn::Tape tape;
    std::vector<nn::VarId> ids;
    for (const auto& x : xs) ids.push_back(tape.leaf(x));
    return tape.val(fn(tape, ids)).value();
  };
  nn::Tape tape;
  std::vector<nn::VarId> ids;
  for (const auto& x : inputs) ids.push_back(tape.leaf(x));
  tape.backward(fn(tape, ids));
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int64_t j = 0; j < inputs[i].numel(); ++j) {
      std::vector<nn::Tensor> xs = inputs;
      xs[i].data[j] += h;
      double up = eval(xs);
      xs[i].data[j] -= 2 * h;
      double down = eval(xs);
      double fd = (up - down) / (2 * h);
      double an = tape.grad(ids[i]).data[j];
      if (std::abs(an - fd) <= 1e-8) continue;  // noise floor near zero
      double rel = std::abs(an - fd) / std::max(std::abs(an), std::abs(fd));
      if (rel > rel_tol) {
        *why = "rel err " + std::to_string(rel);
        return false;
      }
    }
  }
  return true;
}

nn::Tensor rand_tensor(std::vector<int> shape, Rng& rng, double lo = -1,
                       double hi = 1) {
  nn::Tensor t = nn::Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

CriterionResult criterion_gradients(Fixture&) {
  auto t0 = Clock::now();
  Check c;
  std::string why;
  Rng rng(kSeed + 31337);

  auto built = mesh::build_mesh(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
      {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}});
  const auto& adj = built.adjacency;

  for (int trial = 0; trial < 20 && c.ok; ++trial) {
    int cin = 1 + rng.uniform_int(3), cout = 1 + rng.uniform_int(3);
    std::vector<nn::Tensor> in = {
        rand_tensor({6, cin}, rng),  rand_tensor({cin, cout}, rng),
        rand_tensor({cin, cout}, rng), rand_tensor({cin, cout}, rng),
        rand_tensor({cout}, rng),    rand_tensor({6, cout}, rng)};
    c.require(fd_check(
                  in,
                  [&](nn::Tape& t, const std::vector<nn::VarId>& v) {
                    nn::VarId y = nn::edge_conv(t, v[0], adj.n1, adj.n2, v[1],
                                                v[2], v[3], v[4]);
                    return t.dot(t.reshape(y, {6 * cout}),
                                 t.reshape(v[5], {6 * cout}));
                  },
                  1e-5, &why),
              "edge_conv: " + why);
  }

  for (int trial = 0; trial < 20 && c.ok; ++trial) {
    int m = 1 + rng.uniform_int(5), n = 1 + rng.uniform_int(5);
    std::vector<nn::Tensor> in = {rand_tensor({m, n}, rng), rand_tensor({n}, rng),
                                  rand_tensor({m}, rng), rand_tensor({m}, rng)};
    c.require(fd_check(
                  in,
                  [&](nn::Tape& t, const std::vector<nn::VarId>& v) {
                    return t.dot(nn::fc(t, v[1], v[0], v[2]), v[3]);
                  },
                  1e-5, &why),
              "fc: " + why);
  }

  for (int trial = 0; trial < 20 && c.ok; ++trial) {
    int n = 3 + rng.uniform_int(4), ch = 1 + rng.uniform_int(3);
    std::vector<nn::Tensor> in = {rand_tensor({n, ch}, rng, -2, 2),
                                  rand_tensor({ch}, rng, 0.5, 1.5),
                                  rand_tensor({ch}, rng),
                                  rand_tensor({n, ch}, rng)};
    c.require(fd_check(
                  in,
                  [&](nn::Tape& t, const std::vector<nn::VarId>& v) {
                    nn::Tensor rm = nn::Tensor::zeros({ch});
                    nn::Tensor rv = nn::Tensor::zeros({ch});
                    nn::VarId y = nn::batch_norm(t, v[0], v[1], v[2], rm, rv, true);
                    return t.dot(t.reshape(y, {n * ch}),
                                 t.reshape(v[3], {n * ch}));
                  },
                  1e-4, &why),
              "batch_norm: " + why);
  }

  for (int trial = 0; trial < 20 && c.ok; ++trial) {
    nn::Tensor x = rand_tensor({7}, rng);
    for (auto& v : x.data)
      if (std::abs(v) < 1e-3) v += v < 0 ? -1e-3 : 1e-3;
    std::vector<nn::Tensor> in = {x, rand_tensor({7}, rng)};
    c.require(fd_check(
                  in,
                  [&](nn::Tape& t, const std::vector<nn::VarId>& v) {
                    return t.dot(t.leaky_relu(v[0], 0.02), v[1]);
                  },
                  1e-5, &why),
              "leaky_relu: " + why);
  }

  for (int trial = 0; trial < 20 && c.ok; ++trial) {
    std::vector<nn::Tensor> in = {rand_tensor({6}, rng, -2, 2),
                                  rand_tensor({6}, rng)};
    c.require(fd_check(
                  in,
                  [&](nn::Tape& t, const std::vector<nn::VarId>& v) {
                    return t.dot(t.softmax(v[0]), v[1]);
                  },
                  1e-5, &why),
              "softmax: " + why);
  }

  for (int trial = 0; trial < 20 && c.ok; ++trial) {
    std::vector<nn::Tensor> in = {rand_tensor({8}, rng, -2, 2),
                                  rand_tensor({8}, rng, -1, 1)};
    c.require(fd_check(
                  in,
                  [&](nn::Tape& t, const std::vector<nn::VarId>& v) {
                    return nn::kl_gaussian(t, v[0], v[1]);
                  },
                  1e-5, &why),
              "kl: " + why);
  }

  // Full model on a 2-shape batch, level-0 template.
  if (c.ok) {
    model::ModelConfig cfg;
    cfg.part_count = 2;
    cfg.edge_count = 18;
    cfg.template_level = 0;
    cfg.d_z = 8;
    cfg.d_s = 6;
    cfg.d_h = 5;
    cfg.enc_widths = {4, 6};
    cfg.global_widths = {24, 12};
    nn::ParamStore store;
    model::init_params(store, cfg, kSeed + 5);
    auto adj0 = mesh::edge_adjacency(mesh::subdivided_cube(0));

    auto box = [&](Vec3 scale, Vec3 offset) {
      mesh::PartMesh m = mesh::subdivided_cube(0);
      for (auto& v : m.vertices) {
        double cx = v.x + 0.12 * v.x * v.x, cy = v.y + 0.12 * v.y * v.y,
               cz = v.z + 0.12 * v.z * v.z;
        v = Vec3{cx * scale.x, cy * scale.y, cz * scale.z} + offset;
      }
      return m;
    };
    std::vector<model::ShapeInput> batch;
    for (int s = 0; s < 2; ++s) {
      mesh::PartMesh body = box({1.0 + 0.1 * s, 0.8, 0.3}, {0, 0, 0});
      mesh::PartMesh part = box({0.2, 0.15, 0.7 + 0.1 * s}, {0.4, 0.3, -0.4});
      model::ShapeInput input;
      for (const mesh::PartMesh* m : {&body, &part}) {
        input.base.push_back(geom::base_feature(m, 18));
        input.structure.push_back(geom::structural_feature(m, body));
        input.present.push_back(true);
      }
      batch.push_back(std::move(input));
    }

    const double gamma = 10.0, lambda1 = 2.0;
    auto eval = [&](nn::ParamStore s) {
      nn::Tape t;
      model::Bound b = model::bind_params(t, s);
      Rng smp(kSeed + 6);
      std::vector<model::ForwardOutput> outs;
      for (const auto& in : batch)
        outs.push_back(model::model_forward(t, s, b, cfg, adj0, in, true, &smp));
      auto [p, g] = train::vae_losses(t, outs, gamma);
      return t.val(t.add(p, t.scal(g, lambda1))).value();
    };

    nn::Tape tape;
    model::Bound bound = model::bind_params(tape, store);
    Rng smp(kSeed + 6);
    std::vector<model::ForwardOutput> outs;
    for (const auto& in : batch)
      outs.push_back(
          model::model_forward(tape, store, bound, cfg, adj0, in, true, &smp));
    auto [p, g] = train::vae_losses(tape, outs, gamma);
    nn::VarId total = tape.add(p, tape.scal(g, lambda1));
    tape.backward(total);
    auto grads = model::collect_grads(tape, bound);
    const double noise_floor =
        1e-8 * std::max(1.0, std::abs(tape.val(total).value()));

    Rng pick(kSeed + 7);
    std::vector<std::string> names;
    for (const auto& [name, t] : store.params()) names.push_back(name);
    const double h = 1e-6;
    for (int trial = 0; trial < 50 && c.ok; ++trial) {
      const std::string& name =
          names[pick.uniform_int(static_cast<int>(names.size()))];
      int64_t idx = pick.uniform_int(static_cast<int>(store.param(name).numel()));
      nn::ParamStore up = store, down = store;
      up.param(name).data[idx] += h;
      down.param(name).data[idx] -= h;
      double fd = (eval(up) - eval(down)) / (2 * h);
      double an = grads.at(name).data[idx];
      if (std::abs(an - fd) > noise_floor)
        c.require(std::abs(an - fd) / std::max(std::abs(an), std::abs(fd)) <=
                      1e-4,
                  "full model gradient mismatch at " + name);
    }
  }

  double secs = seconds_since(t0);
  c.require(secs < 300.0, "gradient suite exceeded 5 min");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "6 layer kinds x 20 configs + full model, %.1f s",
                secs);
  return {3, "finite-difference gradient oracle", c.ok, c.ok ? buf : c.why,
          secs};
}

// ---------------------------------------------------------------------------
// Criterion 4: retrieval metric oracle.
// ---------------------------------------------------------------------------

struct BruteMetrics {
  double nn = 0, ft = 0, st = 0, ndcg = 0, ap = 0;
};

BruteMetrics brute_metrics(const retr::DescriptorIndex& pool,
                           const retr::QueryItem& q) {
  std::vector<std::pair<double, size_t>> order;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (pool.ids()[i] == q.id) continue;
    double d = 0;
    for (size_t k = 0; k < q.descriptor.size(); ++k)
      d += (pool.descriptors()[i][k] - q.descriptor[k]) *
           (pool.descriptors()[i][k] - q.descriptor[k]);
    order.emplace_back(std::sqrt(d), i);
  }
  std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return pool.ids()[a.second] < pool.ids()[b.second];
  });
  int k = 0;
  for (size_t i = 0; i < pool.size(); ++i)
    if (pool.labels()[i] == q.label && pool.ids()[i] != q.id) ++k;
  BruteMetrics out;
  if (k == 0) return out;
  out.nn = pool.labels()[order[0].second] == q.label ? 1 : 0;
  int seen = 0;
  for (size_t r = 0; r < order.size(); ++r) {
    if (pool.labels()[order[r].second] != q.label) continue;
    ++seen;
    if (r < static_cast<size_t>(k)) out.ft += 1;
    if (r < static_cast<size_t>(2 * k)) out.st += 1;
    out.ndcg += 1.0 / std::log2(r + 2.0);
    out.ap += static_cast<double>(seen) / (r + 1.0);
  }
  double idcg = 0;
  for (int r = 1; r <= k; ++r) idcg += 1.0 / std::log2(r + 1.0);
  out.ft /= k;
  out.st /= k;
  out.ndcg /= idcg;
  out.ap /= k;
  return out;
}

CriterionResult criterion_metrics(Fixture&) {
  auto t0 = Clock::now();
  Check c;
  Rng rng(kSeed + 41);

  for (int trial = 0; trial < 200 && c.ok; ++trial) {
    int n = 4 + rng.uniform_int(9);
    int classes = 2 + rng.uniform_int(3);
    retr::DescriptorIndex pool;
    for (int i = 0; i < n; ++i) {
      std::vector<double> d = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
      char id[16];
      std::snprintf(id, sizeof(id), "s%03d", i);
      pool.add(id, "c" + std::to_string(rng.uniform_int(classes)), std::move(d));
    }
    pool.freeze();
    auto queries = index_queries(pool);

    std::map<std::string, int> class_size;
    for (const auto& l : pool.labels()) ++class_size[l];
    std::vector<BruteMetrics> per_query;
    std::vector<std::string> labels;
    for (const auto& q : queries) {
      if (class_size[q.label] - 1 <= 0) continue;
      per_query.push_back(brute_metrics(pool, q));
      labels.push_back(q.label);
    }
    if (per_query.empty()) continue;

    retr::EvalReport rep = retr::evaluate(pool, queries);
    auto micro = [&](auto sel) {
      double s = 0;
      for (const auto& m : per_query) s += sel(m);
      return s / per_query.size();
    };
    auto macro = [&](auto sel) {
      std::map<std::string, std::pair<double, int>> acc;
      for (size_t i = 0; i < per_query.size(); ++i) {
        acc[labels[i]].first += sel(per_query[i]);
        acc[labels[i]].second += 1;
      }
      double s = 0;
      for (const auto& [l, p] : acc) s += p.first / p.second;
      return s / acc.size();
    };
    c.require(std::abs(rep.micro.nn - micro([](auto& m) { return m.nn; })) <= 1e-12 &&
                  std::abs(rep.micro.ft - micro([](auto& m) { return m.ft; })) <= 1e-12 &&
                  std::abs(rep.micro.st - micro([](auto& m) { return m.st; })) <= 1e-12 &&
                  std::abs(rep.micro.ndcg - micro([](auto& m) { return m.ndcg; })) <= 1e-12 &&
                  std::abs(rep.micro.map - micro([](auto& m) { return m.ap; })) <= 1e-12,
              "micro metrics differ from the brute-force oracle");
    c.require(std::abs(rep.macro.nn - macro([](auto& m) { return m.nn; })) <= 1e-12 &&
                  std::abs(rep.macro.ft - macro([](auto& m) { return m.ft; })) <= 1e-12 &&
                  std::abs(rep.macro.st - macro([](auto& m) { return m.st; })) <= 1e-12 &&
                  std::abs(rep.macro.ndcg - macro([](auto& m) { return m.ndcg; })) <= 1e-12 &&
                  std::abs(rep.macro.map - macro([](auto& m) { return m.ap; })) <= 1e-12,
              "macro metrics differ from the brute-force oracle");
  }

  // Worked examples.
  {
    retr::DescriptorIndex pool;
    pool.add("a1", "A", {1.0});
    pool.add("b1", "B", {2.0});
    pool.add("a2", "A", {3.0});
    pool.add("b2", "B", {4.0});
    pool.freeze();
    retr::EvalReport rep = retr::evaluate(pool, {{"q", "A", {0.0}}});
    c.require(std::abs(rep.micro.map - 5.0 / 6.0) <= 1e-12, "AP != 5/6");
    double expected_ndcg =
        (1.0 + 1.0 / std::log2(4.0)) / (1.0 + 1.0 / std::log2(3.0));
    c.require(std::abs(rep.micro.ndcg - expected_ndcg) <= 1e-12,
              "NDCG mismatch");
    c.require(std::abs(expected_ndcg - 0.9198) <= 1e-4, "NDCG != 0.9198");
    c.require(std::abs(rep.micro.ft - 0.5) <= 1e-12, "FT != 0.5");
  }

  return {4, "retrieval metric oracle", c.ok,
          c.ok ? "200 random pools + worked examples" : c.why,
          seconds_since(t0)};
}

// ---------------------------------------------------------------------------
// Criterion 5: literal 2-channel edge convolution.
// ---------------------------------------------------------------------------

CriterionResult criterion_edge_conv_literal(Fixture&) {
  auto t0 = Clock::now();
  Check c;
  auto built = mesh::build_mesh(
      {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
      {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}});
  const auto& adj = built.adjacency;
  c.require(adj.n1[0] == std::array<int, 2>{4, 1} &&
                adj.n2[0] == std::array<int, 2>{2, 3},
            "adjacency of edge 0 unexpected");

  nn::Tensor x({6, 2}, {1, 2, 3, 5, -1, 4, 2, -2, 0, 1, 7, 0});
  nn::Tensor we({2, 2}, {1, 0.5, -1, 2});
  nn::Tensor wn1({2, 2}, {0.25, 0, 0, 0.25});
  nn::Tensor wn2({2, 2}, {0, 1, 1, 0});
  nn::Tensor b({2}, {0.1, -0.3});
  nn::Tape t;
  nn::VarId y = nn::edge_conv(t, t.leaf(x), adj.n1, adj.n2, t.leaf(we),
                              t.leaf(wn1), t.leaf(wn2), t.leaf(b));
  // Row 0 by hand: (1,2)We + mean((0,1),(3,5))Wn1 + mean((-1,4),(2,-2))Wn2 + b
  c.require(std::abs(t.val(y).at(0, 0) - 0.475) <= 1e-12, "row 0 col 0");
  c.require(std::abs(t.val(y).at(0, 1) - 5.45) <= 1e-12, "row 0 col 1");

  for (int e = 0; e < 6 && c.ok; ++e)
    for (int col = 0; col < 2; ++col) {
      double own = 0, first = 0, second = 0;
      for (int k = 0; k < 2; ++k) {
        own += x.at(e, k) * we.at(k, col);
        first += 0.5 * (x.at(adj.n1[e][0], k) + x.at(adj.n1[e][1], k)) *
                 wn1.at(k, col);
        second += 0.5 * (x.at(adj.n2[e][0], k) + x.at(adj.n2[e][1], k)) *
                  wn2.at(k, col);
      }
      c.require(
          std::abs(t.val(y).at(e, col) - (own + first + second + b.data[col])) <=
              1e-12,
          "edge row deviates from the formula");
    }

  return {5, "2-channel edge convolution literal check", c.ok,
          c.ok ? "hand-evaluated instance, 1e-12" : c.why, seconds_since(t0)};
}

// ---------------------------------------------------------------------------
// Criterion 6: end-to-end regression on tables3.
// ---------------------------------------------------------------------------

CriterionResult criterion_end_to_end(Fixture& fx) {
  auto t0 = Clock::now();
  Check c;

  retr::DescriptorIndex test_pool = embed_split(fx, fx.main_model, fx.model_cfg,
                                                "test");
  auto queries = index_queries(test_pool);
  retr::EvalReport rep = retr::evaluate(test_pool, queries);

  // Chance level of a random ranking: prevalence of relevant candidates.
  double chance = 0;
  int counted = 0;
  std::map<std::string, int> class_size;
  for (const auto& l : test_pool.labels()) ++class_size[l];
  for (const auto& q : queries) {
    int k = class_size[q.label] - 1;
    if (k <= 0) continue;
    chance += static_cast<double>(k) / (test_pool.size() - 1);
    ++counted;
  }
  chance /= counted;

  c.require(rep.micro.map >= 0.60, "micro mAP below 0.60");
  c.require(rep.micro.map >= 3.0 * chance, "micro mAP below 3x chance level");

  // Rotated test queries must return the same top-5 ids as unrotated ones.
  std::map<std::string, size_t> pool_pos;
  for (size_t i = 0; i < test_pool.size(); ++i)
    pool_pos[test_pool.ids()[i]] = i;
  int checked = 0;
  for (size_t i = 0; i < fx.features.inputs.size(); ++i) {
    if (fx.features.splits[i] != "test") continue;
    const std::string& id = fx.features.ids[i];
    auto unrotated =
        retr::query(test_pool, test_pool.descriptors()[pool_pos.at(id)], id);

    RigidTransform t = mesh::random_rotation(kSeed + 12000 + i);
    Rng local(kSeed + 13000 + i);
    t.translation = {local.uniform(-2, 2), local.uniform(-2, 2),
                     local.uniform(-2, 2)};
    const auto& entry = fx.manifest.shapes[i];
    std::vector<mesh::PartMesh> moved;
    for (int p = 0; p < fx.manifest.part_count; ++p)
      moved.push_back(mesh::apply_rigid(
          mesh::read_obj(fx.root / entry.parts[p], p + 1), t));
    model::ShapeInput input;
    const mesh::PartMesh& body = moved[fx.features.body_label - 1];
    for (int p = 0; p < fx.manifest.part_count; ++p) {
      input.base.push_back(
          geom::base_feature(&moved[p], fx.features.edge_count));
      input.structure.push_back(geom::structural_feature(&moved[p], body));
      input.present.push_back(true);
    }
    auto desc =
        model::descriptor(fx.main_model, fx.model_cfg, fx.adjacency, input);
    auto rotated = retr::query(test_pool, desc, id);
    for (size_t r = 0; r < 5 && r < unrotated.size(); ++r)
      c.require(unrotated[r].id == rotated[r].id,
                "rotated query changed the top-5 for " + id);
    ++checked;
  }
  c.require(checked > 0, "no test queries found");

  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "micro mAP %.4f (chance %.4f, 3x=%.4f), train %.0f s",
                rep.micro.map, chance, 3 * chance, fx.main_seconds);
  return {6, "end-to-end regression", c.ok, c.ok ? buf : c.why, secs};
}

// ---------------------------------------------------------------------------
// Criterion 7: ablation direction checks.
// ---------------------------------------------------------------------------

CriterionResult criterion_ablations(Fixture& fx) {
  auto t0 = Clock::now();
  Check c;

  retr::DescriptorIndex vae_pool =
      embed_split(fx, fx.main_model, fx.model_cfg, "test");
  retr::EvalReport vae_rep = retr::evaluate(vae_pool, index_queries(vae_pool));

  model::ModelConfig ae_cfg = fx.model_cfg;
  ae_cfg.vae = false;
  retr::DescriptorIndex ae_pool = embed_split(fx, fx.ae_model, ae_cfg, "test");
  retr::EvalReport ae_rep = retr::evaluate(ae_pool, index_queries(ae_pool));

  model::ModelConfig ns_cfg = fx.model_cfg;
  ns_cfg.use_structure = false;
  retr::DescriptorIndex ns_pool =
      embed_split(fx, fx.nostruct_model, ns_cfg, "test");
  retr::EvalReport ns_rep = retr::evaluate(ns_pool, index_queries(ns_pool));

  c.require(vae_rep.micro.map >= ae_rep.micro.map - 0.02,
            "VAE trails AE by more than 0.02 micro mAP");
  c.require(vae_rep.micro.map >= ns_rep.micro.map - 0.02,
            "structure-on trails structure-off by more than 0.02 micro mAP");

  char buf[160];
  std::snprintf(buf, sizeof(buf), "mAP vae %.4f, ae %.4f, structure-off %.4f",
                vae_rep.micro.map, ae_rep.micro.map, ns_rep.micro.map);
  return {7, "ablation direction checks", c.ok, c.ok ? buf : c.why,
          seconds_since(t0)};
}

// ---------------------------------------------------------------------------
// Criterion 8: KL closed form vs Monte Carlo.
// ---------------------------------------------------------------------------

CriterionResult criterion_kl(Fixture&) {
  auto t0 = Clock::now();
  Check c;
  Rng rng(kSeed + 808);
  std::vector<char> ok(10, 1);
  std::vector<nn::Tensor> mus, logvars;
  for (int trial = 0; trial < 10; ++trial) {
    mus.push_back(rand_tensor({64}, rng, -2, 2));
    logvars.push_back(rand_tensor({64}, rng, -1, 1));
  }
  parallel_for(10, [&](size_t trial) {
    nn::Tape t;
    double exact =
        t.val(nn::kl_gaussian(t, t.leaf(mus[trial]), t.leaf(logvars[trial])))
            .value();
    Rng local(kSeed + 9000 + trial);
    const int samples = 1000000;
    double acc = 0;
    for (int s = 0; s < samples; ++s) {
      double term = 0;
      for (int d = 0; d < 64; ++d) {
        double lv = logvars[trial].data[d];
        double sigma2 = std::exp(lv);
        double z = mus[trial].data[d] + std::sqrt(sigma2) * local.normal();
        term += -0.5 * ((z - mus[trial].data[d]) * (z - mus[trial].data[d]) /
                            sigma2 +
                        lv) +
                0.5 * z * z;
      }
      acc += term;
    }
    double mc = acc / samples;
    if (std::abs(mc - exact) / std::abs(exact) > 0.02) ok[trial] = 0;
  });
  for (char v : ok) c.require(v, "MC estimate deviates by more than 2%");
  return {8, "KL closed form vs Monte Carlo", c.ok,
          c.ok ? "10 posteriors x 1e6 samples" : c.why, seconds_since(t0)};
}

// ---------------------------------------------------------------------------
// Criterion 9: tier image semantics.
// ---------------------------------------------------------------------------

CriterionResult criterion_tier_image(Fixture&) {
  auto t0 = Clock::now();
  Check c;
  retr::DescriptorIndex pool;
  pool.add("A0", "ca", {0.0});
  pool.add("A1", "ca", {0.1});
  pool.add("A2", "ca", {0.2});
  pool.add("B0", "cb", {10.0});
  pool.add("B1", "cb", {10.1});
  pool.add("B2", "cb", {10.2});
  pool.freeze();
  retr::TierImage img = retr::tier_image(pool);
  c.require(img.items == 6 && img.side == 7, "unexpected image dimensions");

  auto color = [&](int row, int col) {
    const uint8_t* p = img.pixel(row, col);
    if (p[0] == 0 && p[1] == 0 && p[2] == 0) return 'k';
    if (p[0] == 255 && p[1] == 0 && p[2] == 0) return 'r';
    if (p[0] == 0 && p[1] == 0 && p[2] == 255) return 'b';
    if (p[0] == 128 && p[1] == 128 && p[2] == 128) return 'g';
    return 'w';
  };
  // Expected rows (cells 0,1,2 then gridline then 4,5,6):
  const char expected[6][6] = {
      // A0        A1   A2   B0   B1   B2
      {'w', 'k', 'r', 'b', 'b', 'w'},  // query A0
      {'k', 'w', 'r', 'b', 'b', 'w'},  // query A1
      {'r', 'k', 'w', 'b', 'b', 'w'},  // query A2
      {'w', 'b', 'b', 'w', 'k', 'r'},  // query B0
      {'w', 'b', 'b', 'k', 'w', 'r'},  // query B1
      {'w', 'b', 'b', 'r', 'k', 'w'},  // query B2
  };
  const int cells[6] = {0, 1, 2, 4, 5, 6};
  for (int qi = 0; qi < 6; ++qi)
    for (int ii = 0; ii < 6; ++ii)
      c.require(color(cells[qi], cells[ii]) == expected[qi][ii],
                "pixel mismatch at query " + std::to_string(qi) + ", item " +
                    std::to_string(ii));
  for (int i = 0; i < 7; ++i) {
    c.require(color(3, i) == 'g' && color(i, 3) == 'g', "gridline not gray");
  }
  return {9, "tier image semantics", c.ok,
          c.ok ? "6-item pool, hand-checked pixels" : c.why, seconds_since(t0)};
}

}  // namespace

int main() {
  std::vector<CriterionResult> results;
  auto t0 = Clock::now();

  Fixture fx = build_fixture();

  results.push_back(criterion_rigid_invariance(fx));
  results.push_back(criterion_scale(fx));
  results.push_back(criterion_gradients(fx));
  results.push_back(criterion_metrics(fx));
  results.push_back(criterion_edge_conv_literal(fx));
  results.push_back(criterion_end_to_end(fx));
  results.push_back(criterion_ablations(fx));
  results.push_back(criterion_kl(fx));
  results.push_back(criterion_tier_image(fx));

  int failures = 0;
  for (const auto& r : results) {
    if (!r.pass) ++failures;
    std::printf("[%s] criterion %d: %s — %s (%.1f s)\n",
                r.pass ? "PASS" : "FAIL", r.number, r.name.c_str(),
                r.detail.c_str(), r.seconds);
  }
  std::printf("%d/%zu criteria passed, total %.0f s\n",
              static_cast<int>(results.size()) - failures, results.size(),
              seconds_since(t0));
  return failures;
}
