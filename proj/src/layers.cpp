#include "risa/layers.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "risa/parallel.hpp"

namespace risa::nn {

void ParamStore::add_param(const std::string& name, Tensor t) {
  adam_[name] = {Tensor::zeros(t.shape), Tensor::zeros(t.shape)};
  params_[name] = std::move(t);
}

void ParamStore::add_buffer(const std::string& name, Tensor t) {
  buffers_[name] = std::move(t);
}

Tensor& ParamStore::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    fail(ErrorCode::ShapeMismatch, "unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    fail(ErrorCode::ShapeMismatch, "unknown parameter " + name);
  return it->second;
}

Tensor& ParamStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end())
    fail(ErrorCode::ShapeMismatch, "unknown buffer " + name);
  return it->second;
}

const Tensor& ParamStore::buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end())
    fail(ErrorCode::ShapeMismatch, "unknown buffer " + name);
  return it->second;
}

void ParamStore::adam_step(const std::map<std::string, Tensor>& grads,
                           double lr, double beta1, double beta2, double eps) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& [name, grad] : grads) {
    auto pit = params_.find(name);
    if (pit == params_.end())
      fail(ErrorCode::ShapeMismatch, "gradient for unknown parameter " + name);
    Tensor& p = pit->second;
    if (!p.same_shape(grad))
      fail(ErrorCode::ShapeMismatch, "gradient shape mismatch for " + name);
    Moments& mom = adam_.at(name);
    const int64_t numel = p.numel();
    const int nt = numel >= (1 << 15) ? worker_count() : 1;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int64_t i = 0; i < numel; ++i) {
      double g = grad.data[i];
      mom.m.data[i] = beta1 * mom.m.data[i] + (1.0 - beta1) * g;
      mom.v.data[i] = beta2 * mom.v.data[i] + (1.0 - beta2) * g * g;
      double mhat = mom.m.data[i] / bc1;
      double vhat = mom.v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {

constexpr char kMagic[5] = {'R', 'I', 'S', 'A', '1'};

void write_u64(std::ofstream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ofstream& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  write_u64(out, bits);
}

double read_f64(std::ifstream& in) {
  uint64_t bits = read_u64(in);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

void write_tensor(std::ofstream& out, const std::string& name, const Tensor& t) {
  write_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(out, t.shape.size());
  for (int e : t.shape) write_u64(out, static_cast<uint64_t>(e));
  for (double v : t.data) write_f64(out, v);
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(kMagic, 5);
  write_u64(out, store.params().size() + store.buffers().size());
  for (const auto& [name, t] : store.params()) write_tensor(out, name, t);
  for (const auto& [name, t] : store.buffers())
    write_tensor(out, "buffer:" + name, t);
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::FileNotFound, path.string());
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0)
    fail(ErrorCode::IoError, path.string() + " is not a checkpoint file");
  uint64_t count = read_u64(in);
  ParamStore store;
  for (uint64_t i = 0; i < count; ++i) {
    uint64_t name_len = read_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    uint64_t rank = read_u64(in);
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (auto& e : shape) {
      e = static_cast<int>(read_u64(in));
      numel *= e;
    }
    Tensor t = Tensor::zeros(shape);
    for (int64_t j = 0; j < numel; ++j) t.data[j] = read_f64(in);
    if (!in) fail(ErrorCode::IoError, "truncated checkpoint " + path.string());
    if (name.rfind("buffer:", 0) == 0)
      store.add_buffer(name.substr(7), std::move(t));
    else
      store.add_param(name, std::move(t));
  }
  return store;
}

Tensor xavier_init(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

VarId fc(Tape& t, VarId x, VarId w, VarId b) {
  return t.add(t.matvec(w, x), b);
}

VarId edge_conv(Tape& t, VarId x, const std::vector<std::array<int, 2>>& n1,
                const std::vector<std::array<int, 2>>& n2, VarId we, VarId wn1,
                VarId wn2, VarId b) {
  VarId own = t.matmul(x, we);
  VarId first = t.matmul(t.neighbor_mean(x, n1), wn1);
  VarId second = t.matmul(t.neighbor_mean(x, n2), wn2);
  return t.add_rows(t.add(t.add(own, first), second), b);
}

VarId batch_norm(Tape& t, VarId x, VarId gamma, VarId beta,
                 Tensor& running_mean, Tensor& running_var, bool train,
                 double momentum, double eps) {
  VarId xhat;
  if (train) {
    VarId mu = t.mean_rows(x);
    VarId centered = t.sub_rows(x, mu);
    VarId var = t.mean_rows(t.mul(centered, centered));
    xhat = t.div_rows(centered, t.sqrt(t.add_const(var, eps)));
    const auto& mu_v = t.val(mu).data;
    const auto& var_v = t.val(var).data;
    for (size_t j = 0; j < mu_v.size(); ++j) {
      running_mean.data[j] =
          (1.0 - momentum) * running_mean.data[j] + momentum * mu_v[j];
      running_var.data[j] =
          (1.0 - momentum) * running_var.data[j] + momentum * var_v[j];
    }
  } else {
    VarId mu = t.leaf(running_mean);
    VarId var = t.leaf(running_var);
    xhat = t.div_rows(t.sub_rows(x, mu), t.sqrt(t.add_const(var, eps)));
  }
  return t.add_rows(t.mul_rows(xhat, gamma), beta);
}

}  // namespace risa::nn
