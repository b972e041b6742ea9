#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "risa/rng.hpp"
#include "risa/tape.hpp"

namespace risa::nn {

// Named tensors: trainable parameters plus non-trainable buffers
// (batch-norm running statistics and configuration scalars). Adam moments
// are kept alongside each trainable parameter.
class ParamStore {
 public:
  void add_param(const std::string& name, Tensor t);
  void add_buffer(const std::string& name, Tensor t);

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  Tensor& buffer(const std::string& name);
  const Tensor& buffer(const std::string& name) const;
  bool has_param(const std::string& name) const { return params_.count(name) > 0; }
  bool has_buffer(const std::string& name) const { return buffers_.count(name) > 0; }

  const std::map<std::string, Tensor>& params() const { return params_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

  // Bias-corrected Adam over every trainable parameter present in `grads`.
  void adam_step(const std::map<std::string, Tensor>& grads, double lr,
                 double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  int64_t adam_steps() const { return step_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> buffers_;
  std::map<std::string, Moments> adam_;
  int64_t step_ = 0;
};

// Checkpoint: magic "RISA1", u64 tensor count, then per tensor
// u64 name length, UTF-8 name, u64 rank, u64 extents, f64 values.
// All integers and floats little-endian. Buffers are stored with a
// "buffer:" name prefix so params and buffers round-trip separately.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

// Xavier-uniform weight init.
Tensor xavier_init(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

// y = W x + b
VarId fc(Tape& t, VarId x, VarId w, VarId b);

// y_i = x_i We + mean(x over n1_i) Wn1 + mean(x over n2_i) Wn2 + b
// x is (E, C_in); weights are (C_in, C_out); bias is (C_out).
VarId edge_conv(Tape& t, VarId x, const std::vector<std::array<int, 2>>& n1,
                const std::vector<std::array<int, 2>>& n2, VarId we, VarId wn1,
                VarId wn2, VarId b);

// Per-channel normalization of an (N, C) input. Training mode normalizes
// with batch statistics and updates the running stats in place (momentum
// 0.1); eval mode normalizes with the running stats.
VarId batch_norm(Tape& t, VarId x, VarId gamma, VarId beta,
                 Tensor& running_mean, Tensor& running_var, bool train,
                 double momentum = 0.1, double eps = 1e-5);

}  // namespace risa::nn
