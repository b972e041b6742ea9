#pragma once

#include <map>
#include <string>
#include <vector>

#include "risa/geomfeat.hpp"
#include "risa/layers.hpp"
#include "risa/mesh.hpp"

namespace risa::model {

struct ModelConfig {
  int part_count = 0;
  int edge_count = 0;
  int template_level = 1;
  int d_z = 64;  // part latent width
  int d_s = 64;  // global latent width
  int d_h = 64;  // attention key/query width
  std::vector<int> enc_widths = {16, 32, 64};
  std::vector<int> global_widths = {512, 256, 128};
  bool vae = true;                    // false: plain autoencoder
  bool use_structure = true;          // false: geometric features only
  bool scale_invariant_base = false;  // normalize edge lengths per part
  bool share_part_weights = false;

  int flat_width() const { return edge_count * enc_widths.back(); }
  int fv_dim() const {
    return use_structure ? part_count * (d_z + 11) : part_count * d_z;
  }
  void validate() const;
};

// One shape, ready for the network: P base features, P structural features,
// and the presence mask. Missing parts carry all-zero features.
struct ShapeInput {
  std::vector<geom::BaseFeature> base;
  std::vector<geom::StructuralFeature> structure;
  std::vector<char> present;
};

// Graph handles produced by a forward pass; values live on the tape.
struct ForwardOutput {
  std::vector<nn::VarId> z;        // P part latents (zero leaf when missing)
  std::vector<nn::VarId> mu;       // kNoVar when missing
  std::vector<nn::VarId> logvar;   // kNoVar when missing
  nn::VarId alpha = nn::kNoVar;    // P-vector, zeros at missing slots
  nn::VarId w_geo = nn::kNoVar;    // scalars; kNoVar when structure off
  nn::VarId w_struct = nn::kNoVar;
  nn::VarId gv = nn::kNoVar;       // P*d_z
  nn::VarId fv = nn::kNoVar;       // fv_dim()
  nn::VarId zv = nn::kNoVar;       // d_s descriptor
  std::vector<nn::VarId> input_f;  // bound base features, kNoVar if missing
  std::vector<nn::VarId> recon;    // per-part reconstructions, kNoVar if missing
  std::vector<nn::VarId> kl_part;  // kNoVar when missing or AE mode
  nn::VarId fv_recon = nn::kNoVar;
  nn::VarId kl_global = nn::kNoVar;
};

void init_params(nn::ParamStore& store, const ModelConfig& cfg, uint64_t seed);

// Configuration travels inside the checkpoint as reserved "cfg.*" buffers.
void store_config(nn::ParamStore& store, const ModelConfig& cfg);
ModelConfig load_config(const nn::ParamStore& store);

// Leaf-bind every trainable parameter onto a tape.
struct Bound {
  std::map<std::string, nn::VarId> ids;
  nn::VarId operator()(const std::string& name) const;
};
Bound bind_params(nn::Tape& tape, const nn::ParamStore& store);
std::map<std::string, nn::Tensor> collect_grads(nn::Tape& tape, const Bound& bound);

struct PartVaeOut {
  nn::VarId z, mu, logvar, recon, kl;
};
PartVaeOut partvae_forward(nn::Tape& tape, nn::ParamStore& store,
                           const Bound& bound, const ModelConfig& cfg,
                           const mesh::EdgeAdjacency& adj, int part,
                           nn::VarId input, bool train, Rng* sampler);

// Softmax attention over present part latents; returns a P-vector with
// zeros at missing slots.
nn::VarId part_geo_attention(nn::Tape& tape, const Bound& bound,
                             const ModelConfig& cfg,
                             const std::vector<nn::VarId>& z,
                             const std::vector<char>& present);

// Two-way softmax over the scores of the geometric and structural blocks.
std::pair<nn::VarId, nn::VarId> geo_struct_attention(nn::Tape& tape,
                                                     const Bound& bound,
                                                     nn::VarId gv, nn::VarId sv);

struct GlobalVaeOut {
  nn::VarId zv, mu, logvar, recon, kl;
};
GlobalVaeOut global_vae_forward(nn::Tape& tape, const Bound& bound,
                                const ModelConfig& cfg, nn::VarId fv,
                                bool train, Rng* sampler, bool vae);

ForwardOutput model_forward(nn::Tape& tape, nn::ParamStore& store,
                            const Bound& bound, const ModelConfig& cfg,
                            const mesh::EdgeAdjacency& adj,
                            const ShapeInput& input, bool train, Rng* sampler);

// Eval-mode descriptor (GlobalVAE latent mean) on a throwaway tape.
std::vector<double> descriptor(nn::ParamStore& store, const ModelConfig& cfg,
                               const mesh::EdgeAdjacency& adj,
                               const ShapeInput& input);

}  // namespace risa::model
