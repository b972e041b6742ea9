#include "risa/model.hpp"

#include <cmath>

namespace risa::model {

using nn::Tape;
using nn::Tensor;
using nn::VarId;

void ModelConfig::validate() const {
  if (part_count < 1 || edge_count < 1 || d_z < 1 || d_s < 1 || d_h < 1)
    fail(ErrorCode::ShapeMismatch, "model dimensions must be >= 1");
  if (enc_widths.empty() || global_widths.empty())
    fail(ErrorCode::ShapeMismatch, "layer width lists must be non-empty");
}

namespace {

std::string part_prefix(const ModelConfig& cfg, int p) {
  return cfg.share_part_weights ? std::string("part0")
                                : "part" + std::to_string(p);
}

void init_conv(nn::ParamStore& s, const std::string& prefix, int cin, int cout,
               Rng& rng, bool with_bn) {
  s.add_param(prefix + ".we", nn::xavier_init({cin, cout}, cin, cout, rng));
  s.add_param(prefix + ".wn1", nn::xavier_init({cin, cout}, cin, cout, rng));
  s.add_param(prefix + ".wn2", nn::xavier_init({cin, cout}, cin, cout, rng));
  s.add_param(prefix + ".b", Tensor::zeros({cout}));
  if (with_bn) {
    Tensor ones = Tensor::zeros({cout});
    for (auto& v : ones.data) v = 1.0;
    s.add_param(prefix + ".bn.gamma", ones);
    s.add_param(prefix + ".bn.beta", Tensor::zeros({cout}));
    s.add_buffer(prefix + ".bn.running_mean", Tensor::zeros({cout}));
    s.add_buffer(prefix + ".bn.running_var", ones);
  }
}

void init_fc(nn::ParamStore& s, const std::string& prefix, int in, int out,
             Rng& rng) {
  s.add_param(prefix + ".w", nn::xavier_init({out, in}, in, out, rng));
  s.add_param(prefix + ".b", Tensor::zeros({out}));
}

}  // namespace

void init_params(nn::ParamStore& store, const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(Rng::mix(seed ^ 0x5152495341ULL));

  const int part_sets = cfg.share_part_weights ? 1 : cfg.part_count;
  for (int p = 0; p < part_sets; ++p) {
    std::string pp = "part" + std::to_string(p);
    int cin = 2;
    for (size_t k = 0; k < cfg.enc_widths.size(); ++k) {
      init_conv(store, pp + ".enc.conv" + std::to_string(k), cin,
                cfg.enc_widths[k], rng, true);
      cin = cfg.enc_widths[k];
    }
    init_fc(store, pp + ".enc.mu", cfg.flat_width(), cfg.d_z, rng);
    init_fc(store, pp + ".enc.logvar", cfg.flat_width(), cfg.d_z, rng);
    init_fc(store, pp + ".dec.fc", cfg.d_z, cfg.flat_width(), rng);
    // Mirror of the encoder: hidden convs keep batch-norm + activation, the
    // final reconstruction layer is linear.
    std::vector<int> widths = cfg.enc_widths;
    for (size_t k = 0; k + 1 < widths.size(); ++k) {
      size_t src = widths.size() - 1 - k;
      init_conv(store, pp + ".dec.conv" + std::to_string(k), widths[src],
                widths[src - 1], rng, true);
    }
    init_conv(store,
              pp + ".dec.conv" + std::to_string(cfg.enc_widths.size() - 1),
              widths.front(), 2, rng, false);
  }

  for (int p = 0; p < cfg.part_count; ++p) {
    store.add_param("attn.k" + std::to_string(p),
                    nn::xavier_init({cfg.d_h, cfg.d_z}, cfg.d_z, cfg.d_h, rng));
    store.add_param("attn.q" + std::to_string(p),
                    nn::xavier_init({cfg.d_h, cfg.d_z}, cfg.d_z, cfg.d_h, rng));
  }

  if (cfg.use_structure) {
    init_fc(store, "gs.f.fc0", cfg.part_count * cfg.d_z, 32, rng);
    init_fc(store, "gs.f.fc1", 32, 1, rng);
    init_fc(store, "gs.g.fc0", cfg.part_count * 11, 16, rng);
    init_fc(store, "gs.g.fc1", 16, 1, rng);
  }

  int in = cfg.fv_dim();
  for (size_t k = 0; k < cfg.global_widths.size(); ++k) {
    init_fc(store, "global.enc.fc" + std::to_string(k), in,
            cfg.global_widths[k], rng);
    in = cfg.global_widths[k];
  }
  init_fc(store, "global.enc.mu", in, cfg.d_s, rng);
  init_fc(store, "global.enc.logvar", in, cfg.d_s, rng);
  in = cfg.d_s;
  for (size_t k = 0; k < cfg.global_widths.size(); ++k) {
    size_t src = cfg.global_widths.size() - 1 - k;
    init_fc(store, "global.dec.fc" + std::to_string(k), in,
            cfg.global_widths[src], rng);
    in = cfg.global_widths[src];
  }
  init_fc(store, "global.dec.out", in, cfg.fv_dim(), rng);

  store_config(store, cfg);
}

void store_config(nn::ParamStore& store, const ModelConfig& cfg) {
  auto put = [&](const std::string& name, double v) {
    if (store.has_buffer(name))
      store.buffer(name) = Tensor::scalar(v);
    else
      store.add_buffer(name, Tensor::scalar(v));
  };
  put("cfg.part_count", cfg.part_count);
  put("cfg.edge_count", cfg.edge_count);
  put("cfg.template_level", cfg.template_level);
  put("cfg.d_z", cfg.d_z);
  put("cfg.d_s", cfg.d_s);
  put("cfg.d_h", cfg.d_h);
  put("cfg.vae", cfg.vae ? 1 : 0);
  put("cfg.structure", cfg.use_structure ? 1 : 0);
  put("cfg.scale_invariant", cfg.scale_invariant_base ? 1 : 0);
  put("cfg.share_parts", cfg.share_part_weights ? 1 : 0);
  Tensor enc = Tensor::zeros({static_cast<int>(cfg.enc_widths.size())});
  for (size_t i = 0; i < cfg.enc_widths.size(); ++i)
    enc.data[i] = cfg.enc_widths[i];
  Tensor glob = Tensor::zeros({static_cast<int>(cfg.global_widths.size())});
  for (size_t i = 0; i < cfg.global_widths.size(); ++i)
    glob.data[i] = cfg.global_widths[i];
  if (store.has_buffer("cfg.enc_widths"))
    store.buffer("cfg.enc_widths") = enc;
  else
    store.add_buffer("cfg.enc_widths", enc);
  if (store.has_buffer("cfg.global_widths"))
    store.buffer("cfg.global_widths") = glob;
  else
    store.add_buffer("cfg.global_widths", glob);
}

ModelConfig load_config(const nn::ParamStore& store) {
  ModelConfig cfg;
  auto get = [&](const std::string& name) {
    return store.buffer(name).value();
  };
  cfg.part_count = static_cast<int>(get("cfg.part_count"));
  cfg.edge_count = static_cast<int>(get("cfg.edge_count"));
  cfg.template_level = static_cast<int>(get("cfg.template_level"));
  cfg.d_z = static_cast<int>(get("cfg.d_z"));
  cfg.d_s = static_cast<int>(get("cfg.d_s"));
  cfg.d_h = static_cast<int>(get("cfg.d_h"));
  cfg.vae = get("cfg.vae") != 0;
  cfg.use_structure = get("cfg.structure") != 0;
  cfg.scale_invariant_base = get("cfg.scale_invariant") != 0;
  cfg.share_part_weights = get("cfg.share_parts") != 0;
  cfg.enc_widths.clear();
  for (double v : store.buffer("cfg.enc_widths").data)
    cfg.enc_widths.push_back(static_cast<int>(v));
  cfg.global_widths.clear();
  for (double v : store.buffer("cfg.global_widths").data)
    cfg.global_widths.push_back(static_cast<int>(v));
  return cfg;
}

VarId Bound::operator()(const std::string& name) const {
  auto it = ids.find(name);
  if (it == ids.end())
    fail(ErrorCode::ShapeMismatch, "parameter not bound: " + name);
  return it->second;
}

Bound bind_params(Tape& tape, const nn::ParamStore& store) {
  Bound b;
  for (const auto& [name, t] : store.params()) b.ids[name] = tape.leaf(t);
  return b;
}

std::map<std::string, Tensor> collect_grads(Tape& tape, const Bound& bound) {
  std::map<std::string, Tensor> grads;
  for (const auto& [name, id] : bound.ids) grads[name] = tape.grad(id);
  return grads;
}

namespace {

constexpr double kLeakySlope = 0.02;

VarId conv_block(Tape& t, nn::ParamStore& store, const Bound& bound,
                 const std::string& prefix, VarId x,
                 const mesh::EdgeAdjacency& adj, bool train, bool with_bn) {
  VarId y = nn::edge_conv(t, x, adj.n1, adj.n2, bound(prefix + ".we"),
                          bound(prefix + ".wn1"), bound(prefix + ".wn2"),
                          bound(prefix + ".b"));
  if (!with_bn) return y;
  y = nn::batch_norm(t, y, bound(prefix + ".bn.gamma"),
                     bound(prefix + ".bn.beta"),
                     store.buffer(prefix + ".bn.running_mean"),
                     store.buffer(prefix + ".bn.running_var"), train);
  return t.leaky_relu(y, kLeakySlope);
}

Tensor normal_noise(int n, Rng& rng) {
  Tensor t = Tensor::zeros({n});
  for (auto& v : t.data) v = rng.normal();
  return t;
}

}  // namespace

PartVaeOut partvae_forward(Tape& t, nn::ParamStore& store, const Bound& bound,
                           const ModelConfig& cfg,
                           const mesh::EdgeAdjacency& adj, int part,
                           VarId input, bool train, Rng* sampler) {
  const Tensor& in = t.val(input);
  if (in.shape.size() != 2 || in.shape[0] != cfg.edge_count || in.shape[1] != 2)
    fail(ErrorCode::ShapeMismatch, "partvae input must be (E, 2)");
  std::string pp = part_prefix(cfg, part);

  VarId h = input;
  for (size_t k = 0; k < cfg.enc_widths.size(); ++k)
    h = conv_block(t, store, bound, pp + ".enc.conv" + std::to_string(k), h,
                   adj, train, true);
  VarId flat = t.reshape(h, {cfg.flat_width()});
  VarId mu = nn::fc(t, flat, bound(pp + ".enc.mu.w"), bound(pp + ".enc.mu.b"));
  VarId logvar =
      nn::fc(t, flat, bound(pp + ".enc.logvar.w"), bound(pp + ".enc.logvar.b"));

  VarId z = mu;
  VarId kl = nn::kNoVar;
  if (cfg.vae) {
    kl = nn::kl_gaussian(t, mu, logvar);
    if (train) {
      VarId sigma = t.exp(t.scal(logvar, 0.5));
      VarId eps = t.leaf(normal_noise(cfg.d_z, *sampler));
      z = t.add(mu, t.mul(eps, sigma));
    }
  }

  VarId d = nn::fc(t, z, bound(pp + ".dec.fc.w"), bound(pp + ".dec.fc.b"));
  VarId g = t.reshape(d, {cfg.edge_count, cfg.enc_widths.back()});
  const size_t last = cfg.enc_widths.size() - 1;
  for (size_t k = 0; k < last; ++k)
    g = conv_block(t, store, bound, pp + ".dec.conv" + std::to_string(k), g,
                   adj, train, true);
  VarId recon = conv_block(t, store, bound,
                           pp + ".dec.conv" + std::to_string(last), g, adj,
                           train, false);
  return {z, mu, logvar, recon, kl};
}

VarId part_geo_attention(Tape& t, const Bound& bound, const ModelConfig& cfg,
                         const std::vector<VarId>& z,
                         const std::vector<char>& present) {
  std::vector<int> live;
  for (int p = 0; p < cfg.part_count; ++p)
    if (present[p]) live.push_back(p);
  if (live.empty())
    fail(ErrorCode::AllPartsMissing, "attention needs at least one part");

  VarId query = nn::kNoVar;
  for (int p : live) {
    VarId qp = t.matvec(bound("attn.q" + std::to_string(p)), z[p]);
    query = (query == nn::kNoVar) ? qp : t.add(query, qp);
  }
  std::vector<VarId> scores;
  scores.reserve(live.size());
  for (int p : live) {
    VarId kp = t.matvec(bound("attn.k" + std::to_string(p)), z[p]);
    scores.push_back(t.dot(kp, query));
  }
  VarId soft = t.softmax(t.concat(scores));

  // Scatter back: softmax over present parts, zero at missing slots.
  std::vector<VarId> slots(cfg.part_count, nn::kNoVar);
  for (size_t i = 0; i < live.size(); ++i)
    slots[live[i]] = t.element(soft, static_cast<int>(i));
  for (int p = 0; p < cfg.part_count; ++p)
    if (slots[p] == nn::kNoVar) slots[p] = t.leaf(Tensor::scalar(0.0));
  return t.concat(slots);
}

std::pair<VarId, VarId> geo_struct_attention(Tape& t, const Bound& bound,
                                             VarId gv, VarId sv) {
  VarId f = t.leaky_relu(nn::fc(t, gv, bound("gs.f.fc0.w"), bound("gs.f.fc0.b")),
                         kLeakySlope);
  f = nn::fc(t, f, bound("gs.f.fc1.w"), bound("gs.f.fc1.b"));
  VarId g = t.leaky_relu(nn::fc(t, sv, bound("gs.g.fc0.w"), bound("gs.g.fc0.b")),
                         kLeakySlope);
  g = nn::fc(t, g, bound("gs.g.fc1.w"), bound("gs.g.fc1.b"));
  VarId soft = t.softmax(t.concat({f, g}));
  return {t.element(soft, 0), t.element(soft, 1)};
}

GlobalVaeOut global_vae_forward(Tape& t, const Bound& bound,
                                const ModelConfig& cfg, VarId fv, bool train,
                                Rng* sampler, bool vae) {
  if (t.val(fv).numel() != cfg.fv_dim())
    fail(ErrorCode::ShapeMismatch, "global feature has wrong length");
  VarId h = fv;
  for (size_t k = 0; k < cfg.global_widths.size(); ++k) {
    std::string p = "global.enc.fc" + std::to_string(k);
    h = t.leaky_relu(nn::fc(t, h, bound(p + ".w"), bound(p + ".b")), kLeakySlope);
  }
  VarId mu = nn::fc(t, h, bound("global.enc.mu.w"), bound("global.enc.mu.b"));
  VarId logvar =
      nn::fc(t, h, bound("global.enc.logvar.w"), bound("global.enc.logvar.b"));

  VarId zv = mu;
  VarId kl = nn::kNoVar;
  if (vae) {
    kl = nn::kl_gaussian(t, mu, logvar);
    if (train) {
      VarId sigma = t.exp(t.scal(logvar, 0.5));
      VarId eps = t.leaf(normal_noise(cfg.d_s, *sampler));
      zv = t.add(mu, t.mul(eps, sigma));
    }
  }

  VarId d = zv;
  for (size_t k = 0; k < cfg.global_widths.size(); ++k) {
    std::string p = "global.dec.fc" + std::to_string(k);
    d = t.leaky_relu(nn::fc(t, d, bound(p + ".w"), bound(p + ".b")), kLeakySlope);
  }
  VarId recon = nn::fc(t, d, bound("global.dec.out.w"), bound("global.dec.out.b"));
  // The ranking descriptor is the latent mean, also when sampling.
  return {mu, mu, logvar, recon, kl};
}

ForwardOutput model_forward(Tape& t, nn::ParamStore& store, const Bound& bound,
                            const ModelConfig& cfg,
                            const mesh::EdgeAdjacency& adj,
                            const ShapeInput& input, bool train, Rng* sampler) {
  if (static_cast<int>(input.base.size()) != cfg.part_count ||
      static_cast<int>(input.present.size()) != cfg.part_count)
    fail(ErrorCode::ShapeMismatch, "shape input does not match part count");

  ForwardOutput out;
  out.z.resize(cfg.part_count, nn::kNoVar);
  out.mu.resize(cfg.part_count, nn::kNoVar);
  out.logvar.resize(cfg.part_count, nn::kNoVar);
  out.input_f.resize(cfg.part_count, nn::kNoVar);
  out.recon.resize(cfg.part_count, nn::kNoVar);
  out.kl_part.resize(cfg.part_count, nn::kNoVar);

  for (int p = 0; p < cfg.part_count; ++p) {
    if (!input.present[p]) {
      out.z[p] = t.leaf(Tensor::zeros({cfg.d_z}));
      continue;
    }
    Tensor f({cfg.edge_count, 2}, input.base[p].data);
    out.input_f[p] = t.leaf(std::move(f));
    PartVaeOut pv = partvae_forward(t, store, bound, cfg, adj, p,
                                    out.input_f[p], train, sampler);
    out.z[p] = pv.z;
    out.mu[p] = pv.mu;
    out.logvar[p] = pv.logvar;
    out.recon[p] = pv.recon;
    out.kl_part[p] = pv.kl;
  }

  out.alpha = part_geo_attention(t, bound, cfg, out.z, input.present);

  std::vector<VarId> weighted(cfg.part_count);
  for (int p = 0; p < cfg.part_count; ++p)
    weighted[p] = t.scale_by(out.z[p], t.element(out.alpha, p));
  out.gv = t.concat(weighted);

  if (cfg.use_structure) {
    std::vector<VarId> sv_parts(cfg.part_count);
    for (int p = 0; p < cfg.part_count; ++p) {
      Tensor sv = Tensor::zeros({11});
      for (int i = 0; i < 11; ++i) sv.data[i] = input.structure[p].sv[i];
      sv_parts[p] = t.leaf(std::move(sv));
    }
    VarId sv_all = t.concat(sv_parts);
    auto [wg, ws] = geo_struct_attention(t, bound, out.gv, sv_all);
    out.w_geo = wg;
    out.w_struct = ws;
    std::vector<VarId> blocks;
    blocks.reserve(2 * cfg.part_count);
    for (int p = 0; p < cfg.part_count; ++p) {
      blocks.push_back(t.scale_by(weighted[p], wg));
      blocks.push_back(t.scale_by(sv_parts[p], ws));
    }
    out.fv = t.concat(blocks);
  } else {
    out.fv = out.gv;
  }

  GlobalVaeOut gv_out =
      global_vae_forward(t, bound, cfg, out.fv, train, sampler, cfg.vae);
  out.zv = gv_out.zv;
  out.fv_recon = gv_out.recon;
  out.kl_global = gv_out.kl;
  return out;
}

std::vector<double> descriptor(nn::ParamStore& store, const ModelConfig& cfg,
                               const mesh::EdgeAdjacency& adj,
                               const ShapeInput& input) {
  Tape tape;
  Bound bound = bind_params(tape, store);
  ForwardOutput out =
      model_forward(tape, store, bound, cfg, adj, input, false, nullptr);
  return tape.val(out.zv).data;
}

}  // namespace risa::model
