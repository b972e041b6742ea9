#include "risa/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace risa::train {

using nn::Tape;
using nn::Tensor;
using nn::VarId;

void TrainConfig::validate() const {
  if (lr <= 0 || batch_size <= 0 || gamma < 0 || lambda1 < 0 || lambda2 < 0 ||
      lambda3 < 0 || epochs <= 0)
    fail(ErrorCode::ConfigParse, "training hyper-parameters must be positive");
  if (eta <= 0 || eta >= 1)
    fail(ErrorCode::ConfigParse, "eta must lie in (0, 1)");
}

std::vector<Triplet> mine_triplets(const std::vector<std::string>& labels) {
  std::vector<Triplet> out;
  const int n = static_cast<int>(labels.size());
  for (int a = 0; a < n; ++a)
    for (int p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (int neg = 0; neg < n; ++neg)
        if (labels[neg] != labels[a]) out.push_back({a, p, neg});
    }
  return out;
}

std::pair<VarId, VarId> vae_losses(
    Tape& t, const std::vector<model::ForwardOutput>& outputs, double gamma) {
  if (outputs.empty())
    fail(ErrorCode::ShapeMismatch, "vae_losses: empty batch");
  VarId part_sum = nn::kNoVar;
  VarId global_sum = nn::kNoVar;
  for (const auto& out : outputs) {
    VarId recon_sum = nn::kNoVar;
    VarId kl_sum = nn::kNoVar;
    int present = 0;
    for (size_t p = 0; p < out.recon.size(); ++p) {
      if (out.recon[p] == nn::kNoVar) continue;
      ++present;
      VarId m = nn::mse_mean(t, out.input_f[p], out.recon[p]);
      recon_sum = recon_sum == nn::kNoVar ? m : t.add(recon_sum, m);
      if (out.kl_part[p] != nn::kNoVar)
        kl_sum = kl_sum == nn::kNoVar ? out.kl_part[p]
                                      : t.add(kl_sum, out.kl_part[p]);
    }
    if (present == 0)
      fail(ErrorCode::AllPartsMissing, "vae_losses: shape with no parts");
    VarId part = t.scal(recon_sum, 1.0 / present);
    if (kl_sum != nn::kNoVar) part = t.add(part, t.scal(kl_sum, gamma));

    VarId global = nn::mse_mean(t, out.fv, out.fv_recon);
    if (out.kl_global != nn::kNoVar)
      global = t.add(global, t.scal(out.kl_global, gamma));

    part_sum = part_sum == nn::kNoVar ? part : t.add(part_sum, part);
    global_sum = global_sum == nn::kNoVar ? global : t.add(global_sum, global);
  }
  double inv = 1.0 / static_cast<double>(outputs.size());
  return {t.scal(part_sum, inv), t.scal(global_sum, inv)};
}

VarId triplet_loss(Tape& t, const std::vector<VarId>& vectors,
                   const std::vector<Triplet>& triplets, double eta,
                   bool mean) {
  if (triplets.empty())
    fail(ErrorCode::NoValidTriplet, "triplet_loss: no triplets");
  const int n = static_cast<int>(vectors.size());

  // Squared Euclidean distances for every unordered pair, then min-max
  // normalization with the minimum pinned at 0.
  std::map<std::pair<int, int>, VarId> dist;
  std::vector<VarId> all;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      VarId d = t.sub(vectors[i], vectors[j]);
      VarId d2 = t.dot(d, d);
      dist[{i, j}] = d2;
      all.push_back(d2);
    }
  VarId dmax = t.vmax(t.concat(all));
  if (t.val(dmax).value() < 1e-30) dmax = t.leaf(Tensor::scalar(1.0));

  auto normalized = [&](int i, int j) {
    VarId d = dist.at({std::min(i, j), std::max(i, j)});
    return t.div_scalar(d, dmax);
  };

  VarId loss = nn::kNoVar;
  for (const auto& tri : triplets) {
    VarId margin = t.add_const(
        t.sub(normalized(tri.anchor, tri.positive),
              normalized(tri.anchor, tri.negative)),
        eta);
    VarId hinge = t.leaky_relu(margin, 0.0);
    loss = loss == nn::kNoVar ? hinge : t.add(loss, hinge);
  }
  if (mean) loss = t.scal(loss, 1.0 / static_cast<double>(triplets.size()));
  return loss;
}

std::vector<std::vector<int>> make_batches(const std::vector<std::string>& labels,
                                           int batch_size, Rng& rng) {
  std::map<std::string, std::vector<int>> groups;
  for (size_t i = 0; i < labels.size(); ++i)
    groups[labels[i]].push_back(static_cast<int>(i));

  std::vector<std::vector<std::vector<int>>> units_per_group;
  for (auto& [label, members] : groups) {
    for (size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[rng.uniform_int(static_cast<int>(i))]);
    std::vector<std::vector<int>> units;
    for (size_t i = 0; i + 1 < members.size(); i += 2)
      units.push_back({members[i], members[i + 1]});
    if (members.size() % 2 == 1) units.push_back({members.back()});
    units_per_group.push_back(std::move(units));
  }

  // Deal one unit per sub-class in turn.
  std::vector<std::vector<int>> dealt;
  size_t remaining = 0;
  for (const auto& u : units_per_group) remaining += u.size();
  std::vector<size_t> cursor(units_per_group.size(), 0);
  while (remaining > 0) {
    for (size_t g = 0; g < units_per_group.size(); ++g) {
      if (cursor[g] < units_per_group[g].size()) {
        dealt.push_back(units_per_group[g][cursor[g]++]);
        --remaining;
      }
    }
  }

  std::vector<std::vector<int>> batches;
  std::vector<int> current;
  for (const auto& unit : dealt) {
    if (static_cast<int>(current.size() + unit.size()) > batch_size &&
        !current.empty()) {
      batches.push_back(current);
      current.clear();
    }
    current.insert(current.end(), unit.begin(), unit.end());
  }
  if (!current.empty()) batches.push_back(current);
  return batches;
}

TrainResult train(nn::ParamStore& store, const model::ModelConfig& cfg,
                  const mesh::EdgeAdjacency& adj,
                  const std::vector<model::ShapeInput>& inputs,
                  const std::vector<std::string>& labels,
                  const TrainConfig& tc,
                  const std::filesystem::path* checkpoint_path) {
  tc.validate();
  if (inputs.size() != labels.size() || inputs.empty())
    fail(ErrorCode::ShapeMismatch, "train: inputs and labels disagree");

  TrainResult result;
  Rng train_rng(Rng::mix(tc.seed ^ 0x747261696eULL));

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng epoch_rng = train_rng.fork(static_cast<uint64_t>(epoch));
    auto batches = make_batches(labels, tc.batch_size, epoch_rng);

    EpochLog log{epoch, 0, 0, 0, 0, 0};
    for (size_t b = 0; b < batches.size(); ++b) {
      Rng sampler = epoch_rng.fork(1000 + b);
      Tape tape;
      model::Bound bound = model::bind_params(tape, store);

      std::vector<model::ForwardOutput> outs;
      std::vector<std::string> batch_labels;
      std::vector<VarId> gvs, zvs;
      outs.reserve(batches[b].size());
      for (int idx : batches[b]) {
        outs.push_back(model::model_forward(tape, store, bound, cfg, adj,
                                            inputs[idx], true, &sampler));
        batch_labels.push_back(labels[idx]);
        gvs.push_back(outs.back().gv);
        zvs.push_back(outs.back().zv);
      }

      auto [l_part, l_global] = vae_losses(tape, outs, tc.gamma);
      auto triplets = mine_triplets(batch_labels);
      VarId l_trip_part = nn::kNoVar;
      VarId l_trip_global = nn::kNoVar;
      if (!triplets.empty()) {
        l_trip_part = triplet_loss(tape, gvs, triplets, tc.eta, tc.triplet_mean);
        l_trip_global = triplet_loss(tape, zvs, triplets, tc.eta, tc.triplet_mean);
      }
      VarId total = tape.add(l_part, tape.scal(l_global, tc.lambda1));
      if (l_trip_part != nn::kNoVar)
        total = tape.add(total, tape.scal(l_trip_part, tc.lambda2));
      if (l_trip_global != nn::kNoVar)
        total = tape.add(total, tape.scal(l_trip_global, tc.lambda3));

      double total_v = tape.val(total).value();
      if (!std::isfinite(total_v))
        fail(ErrorCode::DivergedLoss,
             "non-finite loss at epoch " + std::to_string(epoch));

      tape.backward(total);
      store.adam_step(model::collect_grads(tape, bound), tc.lr);

      log.vae_part += tape.val(l_part).value();
      log.vae_global += tape.val(l_global).value();
      if (l_trip_part != nn::kNoVar)
        log.trip_part += tape.val(l_trip_part).value();
      if (l_trip_global != nn::kNoVar)
        log.trip_global += tape.val(l_trip_global).value();
      log.total += total_v;
    }
    double inv = 1.0 / static_cast<double>(batches.size());
    log.vae_part *= inv;
    log.vae_global *= inv;
    log.trip_part *= inv;
    log.trip_global *= inv;
    log.total *= inv;
    result.log.push_back(log);
    result.epochs_run = epoch + 1;

    if (checkpoint_path && tc.checkpoint_every > 0 &&
        (epoch + 1) % tc.checkpoint_every == 0)
      nn::save_checkpoint(store, *checkpoint_path);

    if (epoch + 1 >= tc.convergence_window + 1) {
      double before =
          result.log[result.log.size() - 1 - tc.convergence_window].total;
      double now = log.total;
      if (std::abs(before - now) <
          tc.convergence_tol * std::max(std::abs(before), 1e-12)) {
        result.converged = true;
        break;
      }
    }
  }

  if (checkpoint_path) nn::save_checkpoint(store, *checkpoint_path);
  return result;
}

void write_loss_log(const std::vector<EpochLog>& log,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string());
  out << "epoch,l_vae_part,l_vae_global,l_trip_part,l_trip_global,total\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  e.epoch, e.vae_part, e.vae_global, e.trip_part,
                  e.trip_global, e.total);
    out << buf;
  }
}

}  // namespace risa::train
