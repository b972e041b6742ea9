#include "risa/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "risa/dataset.hpp"
#include "risa/parallel.hpp"
#include "risa/retrieval.hpp"
#include "risa/train.hpp"

namespace risa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string dataset_dir;
  std::string checkpoint;
  std::string out_dir = ".";
  uint64_t seed = 0;
  model::ModelConfig model;
  train::TrainConfig train;
  std::string eval_pool = "test";
  int top_k = 5;
};

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      fail(ErrorCode::ConfigParse, "unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::FileNotFound, path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigParse, path.string() + ": " + e.what());
  }
  RunConfig cfg;
  try {
    reject_unknown(j,
                   {"dataset_dir", "checkpoint", "out_dir", "seed", "model",
                    "train", "eval"},
                   "config");
    maybe(j, "dataset_dir", cfg.dataset_dir);
    maybe(j, "checkpoint", cfg.checkpoint);
    maybe(j, "out_dir", cfg.out_dir);
    maybe(j, "seed", cfg.seed);
    if (j.contains("model")) {
      const json& m = j.at("model");
      reject_unknown(m,
                     {"d_z", "d_s", "d_h", "enc_widths", "global_widths", "vae",
                      "structure", "scale_invariant_base", "share_part_weights"},
                     "config.model");
      maybe(m, "d_z", cfg.model.d_z);
      maybe(m, "d_s", cfg.model.d_s);
      maybe(m, "d_h", cfg.model.d_h);
      maybe(m, "enc_widths", cfg.model.enc_widths);
      maybe(m, "global_widths", cfg.model.global_widths);
      maybe(m, "vae", cfg.model.vae);
      maybe(m, "structure", cfg.model.use_structure);
      maybe(m, "scale_invariant_base", cfg.model.scale_invariant_base);
      maybe(m, "share_part_weights", cfg.model.share_part_weights);
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown(t,
                     {"lr", "batch_size", "gamma", "lambda1", "lambda2",
                      "lambda3", "eta", "epochs", "checkpoint_every",
                      "triplet_mean", "convergence_window", "convergence_tol"},
                     "config.train");
      maybe(t, "lr", cfg.train.lr);
      maybe(t, "batch_size", cfg.train.batch_size);
      maybe(t, "gamma", cfg.train.gamma);
      maybe(t, "lambda1", cfg.train.lambda1);
      maybe(t, "lambda2", cfg.train.lambda2);
      maybe(t, "lambda3", cfg.train.lambda3);
      maybe(t, "eta", cfg.train.eta);
      maybe(t, "epochs", cfg.train.epochs);
      maybe(t, "checkpoint_every", cfg.train.checkpoint_every);
      maybe(t, "triplet_mean", cfg.train.triplet_mean);
      maybe(t, "convergence_window", cfg.train.convergence_window);
      maybe(t, "convergence_tol", cfg.train.convergence_tol);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      reject_unknown(e, {"pool", "top_k"}, "config.eval");
      maybe(e, "pool", cfg.eval_pool);
      maybe(e, "top_k", cfg.top_k);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigParse, path.string() + ": " + e.what());
  }
  return cfg;
}

fs::path manifest_path(const fs::path& dataset) {
  if (fs::is_directory(dataset)) return dataset / "manifest.json";
  return dataset;
}

int cmd_gen(const std::string& spec_arg, const std::string& out,
            uint64_t seed, int counts, bool rotate, bool do_split) {
  data::FamilySpec spec;
  if (spec_arg == "tables3")
    spec = data::tables3_spec();
  else
    spec = data::load_family_spec(spec_arg);
  data::DatasetManifest manifest = data::generate(spec, counts, seed, out);
  if (rotate) data::perturb_rotations(manifest, out, Rng::mix(seed + 1));
  if (do_split) data::split(manifest, Rng::mix(seed + 2));
  data::save_manifest(manifest, fs::path(out) / "manifest.json");
  std::cout << "generated " << manifest.shapes.size() << " shapes in " << out
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.dataset_dir.empty())
    fail(ErrorCode::ConfigParse, "config needs dataset_dir");
  fs::path root = fs::path(cfg.dataset_dir);
  data::DatasetManifest manifest = data::load_manifest(manifest_path(root));

  data::FeatureSet features =
      data::extract_features(manifest, root, cfg.model.scale_invariant_base);

  model::ModelConfig mc = cfg.model;
  mc.part_count = features.part_count;
  mc.edge_count = features.edge_count;
  mc.template_level = manifest.template_level;

  std::vector<model::ShapeInput> train_inputs;
  std::vector<std::string> train_labels;
  for (size_t i = 0; i < features.inputs.size(); ++i) {
    if (features.splits[i] != "train") continue;
    train_inputs.push_back(features.inputs[i]);
    train_labels.push_back(features.labels[i]);
  }
  if (train_inputs.empty())
    fail(ErrorCode::TooFewShapes, "no shapes in the train split");

  nn::ParamStore store;
  model::init_params(store, mc, cfg.seed);

  train::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  mesh::EdgeAdjacency adj =
      mesh::edge_adjacency(mesh::subdivided_cube(mc.template_level));

  fs::create_directories(cfg.out_dir);
  fs::path ckpt = cfg.checkpoint.empty()
                      ? fs::path(cfg.out_dir) / "model.ckpt"
                      : fs::path(cfg.checkpoint);
  train::TrainResult result =
      train::train(store, mc, adj, train_inputs, train_labels, tc, &ckpt);
  train::write_loss_log(result.log, fs::path(cfg.out_dir) / "loss_log.csv");
  std::cout << "trained " << result.epochs_run << " epochs"
            << (result.converged ? " (converged)" : "") << ", checkpoint at "
            << ckpt.string() << "\n";
  return 0;
}

int cmd_embed(const std::string& checkpoint, const std::string& dataset,
              const std::string& out, const std::string& split) {
  nn::ParamStore store = nn::load_checkpoint(checkpoint);
  model::ModelConfig mc = model::load_config(store);
  fs::path mpath = manifest_path(dataset);
  data::DatasetManifest manifest = data::load_manifest(mpath);
  fs::path root = mpath.parent_path();

  data::FeatureSet features =
      data::extract_features(manifest, root, mc.scale_invariant_base);
  if (features.part_count != mc.part_count ||
      features.edge_count != mc.edge_count)
    fail(ErrorCode::ConnectivityMismatch,
         "dataset does not match the checkpoint's template");

  mesh::EdgeAdjacency adj =
      mesh::edge_adjacency(mesh::subdivided_cube(mc.template_level));

  std::vector<size_t> keep;
  for (size_t i = 0; i < features.inputs.size(); ++i)
    if (split == "all" || features.splits[i] == split) keep.push_back(i);
  if (keep.empty()) fail(ErrorCode::TooFewShapes, "no shapes in split " + split);

  std::vector<std::vector<double>> descs(keep.size());
  parallel_for(keep.size(), [&](size_t i) {
    descs[i] = model::descriptor(store, mc, adj, features.inputs[keep[i]]);
  });

  retr::DescriptorIndex index;
  for (size_t i = 0; i < keep.size(); ++i)
    index.add(features.ids[keep[i]], features.labels[keep[i]],
              std::move(descs[i]));
  index.freeze();
  retr::write_descriptors(index, out);
  std::cout << "embedded " << keep.size() << " shapes to " << out << "\n";
  return 0;
}

int cmd_query(const std::string& descriptors, const std::string& id, int k) {
  retr::DescriptorIndex index = retr::read_descriptors(descriptors);
  const auto& ids = index.ids();
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end())
    fail(ErrorCode::FileNotFound, "query id " + id + " not in " + descriptors);
  size_t qi = static_cast<size_t>(it - ids.begin());
  retr::RankedList ranked = retr::query(index, index.descriptors()[qi], id);
  std::cout << "rank,id,label,distance\n";
  char buf[64];
  for (size_t r = 0; r < ranked.size() && r < static_cast<size_t>(k); ++r) {
    std::snprintf(buf, sizeof(buf), "%zu,", r + 1);
    std::cout << buf << ranked[r].id << ',' << ranked[r].label << ',';
    std::snprintf(buf, sizeof(buf), "%.17g\n", ranked[r].distance);
    std::cout << buf;
  }
  return 0;
}

int cmd_eval(const std::string& queries_csv, const std::string& pool_csv,
             const std::string& out_dir) {
  retr::DescriptorIndex queries = retr::read_descriptors(queries_csv);
  retr::DescriptorIndex pool =
      pool_csv.empty() ? retr::read_descriptors(queries_csv)
                       : retr::read_descriptors(pool_csv);

  std::vector<retr::QueryItem> items;
  for (size_t i = 0; i < queries.size(); ++i)
    items.push_back({queries.ids()[i], queries.labels()[i],
                     queries.descriptors()[i]});

  retr::EvalReport report = retr::evaluate(pool, items);
  auto curve = retr::pr_curve(pool, items);
  retr::TierImage tiers = retr::tier_image(pool);

  fs::create_directories(out_dir);
  std::string metrics = retr::metrics_json(report);
  std::ofstream mout(fs::path(out_dir) / "metrics.json");
  mout << metrics << '\n';
  retr::write_pr_csv(curve, fs::path(out_dir) / "pr.csv");
  retr::write_ppm(tiers, fs::path(out_dir) / "tier.ppm");
  std::cout << metrics << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Part-based rotation-invariant shape retrieval pipeline"};
  app.require_subcommand(1);

  std::string spec = "tables3", out, config_path, checkpoint, dataset, split =
                                                                  "test";
  std::string descriptors, query_id, pool_csv;
  uint64_t seed = 0;
  int counts = 20, top_k = 5;
  bool no_rotate = false, no_split = false;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--spec", spec, "Family spec: 'tables3' or a JSON file");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Random seed");
  gen->add_option("--counts", counts, "Shapes per sub-class");
  gen->add_flag("--no-rotate", no_rotate, "Skip the random SO(3) perturbation");
  gen->add_flag("--no-split", no_split, "Skip the 4:1 train/test split");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", config_path, "JSON run config")->required();
  bool seed_given = false;
  train_cmd->add_option("--seed", seed, "Override config seed")
      ->each([&](const std::string&) { seed_given = true; });

  auto* embed = app.add_subcommand("embed", "Compute shape descriptors");
  embed->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  embed->add_option("--manifest", dataset, "Dataset dir or manifest.json")
      ->required();
  embed->add_option("--out", out, "Output descriptor CSV")->required();
  embed->add_option("--split", split, "train | test | all");

  auto* query_cmd = app.add_subcommand("query", "Rank neighbors of a shape");
  query_cmd->add_option("--descriptors", descriptors, "Descriptor CSV")
      ->required();
  query_cmd->add_option("--id", query_id, "Query shape id")->required();
  query_cmd->add_option("--k", top_k, "Rows to print");

  auto* eval_cmd = app.add_subcommand("eval", "Retrieval metrics and reports");
  eval_cmd->add_option("--descriptors", descriptors, "Query descriptor CSV")
      ->required();
  eval_cmd->add_option("--pool", pool_csv, "Pool descriptor CSV (default: queries)");
  eval_cmd->add_option("--out", out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen(spec, out, seed, counts, !no_rotate, !no_split);
    if (train_cmd->parsed()) {
      RunConfig cfg = load_run_config(config_path);
      if (seed_given) cfg.seed = seed;
      return cmd_train(cfg);
    }
    if (embed->parsed()) return cmd_embed(checkpoint, dataset, out, split);
    if (query_cmd->parsed()) return cmd_query(descriptors, query_id, top_k);
    if (eval_cmd->parsed()) return cmd_eval(descriptors, pool_csv, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 2;
}

}  // namespace risa::cli
