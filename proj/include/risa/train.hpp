#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "risa/model.hpp"

namespace risa::train {

struct TrainConfig {
  double lr = 1e-5;
  int batch_size = 8;
  double gamma = 1e5;     // KL weight inside each VAE loss
  double lambda1 = 1e3;   // global VAE loss weight
  double lambda2 = 1e2;   // part triplet loss weight
  double lambda3 = 1e2;   // global triplet loss weight
  double eta = 0.3;       // triplet margin on normalized distances
  int epochs = 400;
  uint64_t seed = 0;
  int checkpoint_every = 200;
  bool triplet_mean = false;  // mean instead of sum over triplets
  int convergence_window = 20;
  double convergence_tol = 1e-4;

  void validate() const;
};

struct Triplet {
  int anchor, positive, negative;
};

// All in-batch (a, p, n) with a != p, label(a) == label(p) != label(n),
// in deterministic (a, p, n) ascending order. May be empty.
std::vector<Triplet> mine_triplets(const std::vector<std::string>& labels);

// Batch-averaged VAE losses: (part term, global term). The part term is
// (1/P_i) sum of per-part reconstruction MSE plus gamma times the sum of
// per-part KL over present parts; the global term is analogous for the
// global feature.
std::pair<nn::VarId, nn::VarId> vae_losses(
    nn::Tape& tape, const std::vector<model::ForwardOutput>& outputs,
    double gamma);

// Hinge loss over triplets of batch vectors. Squared Euclidean distances are
// normalized by the largest pairwise distance in the batch before the margin
// test.
nn::VarId triplet_loss(nn::Tape& tape, const std::vector<nn::VarId>& vectors,
                       const std::vector<Triplet>& triplets, double eta,
                       bool mean = false);

// Deterministic stratified batches: shapes of one sub-class are paired and
// the pairs dealt round-robin across sub-classes, so a batch mixes at least
// two sub-classes whenever the epoch pool allows it.
std::vector<std::vector<int>> make_batches(const std::vector<std::string>& labels,
                                           int batch_size, Rng& rng);

struct EpochLog {
  int epoch;
  double vae_part, vae_global, trip_part, trip_global, total;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int epochs_run = 0;
  bool converged = false;
};

TrainResult train(nn::ParamStore& store, const model::ModelConfig& cfg,
                  const mesh::EdgeAdjacency& adj,
                  const std::vector<model::ShapeInput>& inputs,
                  const std::vector<std::string>& labels,
                  const TrainConfig& tc,
                  const std::filesystem::path* checkpoint_path = nullptr);

// CSV: epoch,l_vae_part,l_vae_global,l_trip_part,l_trip_global,total
void write_loss_log(const std::vector<EpochLog>& log,
                    const std::filesystem::path& path);

}  // namespace risa::train
