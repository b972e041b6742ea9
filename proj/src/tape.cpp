#include "risa/tape.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "risa/parallel.hpp"

namespace risa::nn {

namespace {
// Hot contractions run data-parallel over disjoint output ranges with a
// static schedule, so results are bitwise identical at any thread count.
inline int threads_for(int64_t work) {
#ifdef _OPENMP
  if (work < 1 << 15) return 1;
  return worker_count();
#else
  (void)work;
  return 1;
#endif
}
}  // namespace

VarId Tape::push(Tensor value, std::function<void(Tape&)> pull) {
  nodes_.push_back({std::move(value), Tensor{}, std::move(pull)});
  return static_cast<VarId>(nodes_.size() - 1);
}

VarId Tape::leaf(Tensor value) { return push(std::move(value), {}); }

void Tape::backward(VarId loss) {
  if (nodes_[loss].value.numel() != 1)
    fail(ErrorCode::ShapeMismatch, "backward: loss must be scalar");
  for (auto& n : nodes_) {
    n.grad = Tensor::zeros(n.value.shape);
  }
  nodes_[loss].grad.data[0] = 1.0;
  for (VarId id = static_cast<VarId>(nodes_.size()) - 1; id >= 0; --id) {
    if (nodes_[id].pull) nodes_[id].pull(*this);
  }
}

VarId Tape::add(VarId a, VarId b) {
  require_same_shape(val(a), val(b), "add");
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += val(b).data[i];
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    auto& gb = t.grad(b).data;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  };
  return id;
}

VarId Tape::sub(VarId a, VarId b) {
  require_same_shape(val(a), val(b), "sub");
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= val(b).data[i];
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    auto& gb = t.grad(b).data;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  };
  return id;
}

VarId Tape::mul(VarId a, VarId b) {
  require_same_shape(val(a), val(b), "mul");
  Tensor out = val(a);
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= val(b).data[i];
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& va = t.val(a).data;
    const auto& vb = t.val(b).data;
    auto& ga = t.grad(a).data;
    auto& gb = t.grad(b).data;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  };
  return id;
}

VarId Tape::scal(VarId a, double c) {
  Tensor out = val(a);
  for (auto& v : out.data) v *= c;
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, c, id](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  };
  return id;
}

VarId Tape::add_const(VarId a, double c) {
  Tensor out = val(a);
  for (auto& v : out.data) v += c;
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return id;
}

VarId Tape::exp(VarId a) {
  Tensor out = val(a);
  for (auto& v : out.data) v = std::exp(v);
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& y = t.val(id).data;
    auto& ga = t.grad(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  };
  return id;
}

VarId Tape::sqrt(VarId a) {
  Tensor out = val(a);
  for (auto& v : out.data) v = std::sqrt(v);
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& y = t.val(id).data;
    auto& ga = t.grad(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / y[i];
  };
  return id;
}

VarId Tape::leaky_relu(VarId a, double slope) {
  Tensor out = val(a);
  for (auto& v : out.data) v = v >= 0.0 ? v : slope * v;
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, slope, id](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& x = t.val(a).data;
    auto& ga = t.grad(a).data;
    for (size_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * (x[i] >= 0.0 ? 1.0 : slope);
  };
  return id;
}

VarId Tape::sum(VarId a) {
  double s = 0.0;
  for (double v : val(a).data) s += v;
  VarId id = push(Tensor::scalar(s), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    double g = t.grad(id).data[0];
    auto& ga = t.grad(a).data;
    for (auto& v : ga) v += g;
  };
  return id;
}

VarId Tape::dot(VarId a, VarId b) {
  require_same_shape(val(a), val(b), "dot");
  double s = 0.0;
  const auto& va = val(a).data;
  const auto& vb = val(b).data;
  for (size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  VarId id = push(Tensor::scalar(s), nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    double g = t.grad(id).data[0];
    const auto& va = t.val(a).data;
    const auto& vb = t.val(b).data;
    auto& ga = t.grad(a).data;
    auto& gb = t.grad(b).data;
    for (size_t i = 0; i < va.size(); ++i) {
      ga[i] += g * vb[i];
      gb[i] += g * va[i];
    }
  };
  return id;
}

VarId Tape::matmul(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
    fail(ErrorCode::ShapeMismatch, "matmul: incompatible shapes");
  const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  const int nt = threads_for(static_cast<int64_t>(m) * k * n);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int i = 0; i < m; ++i) {
    const double* arow = &ta.data[static_cast<size_t>(i) * k];
    double* orow = &out.data[static_cast<size_t>(i) * n];
    for (int kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      const double* brow = &tb.data[static_cast<size_t>(kk) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, b, id, m, k, n](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& va = t.val(a).data;
    const auto& vb = t.val(b).data;
    auto& ga = t.grad(a).data;
    auto& gb = t.grad(b).data;
    const int nt = threads_for(static_cast<int64_t>(m) * k * n);
    // dA = G * B^T, rows independent.
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int i = 0; i < m; ++i) {
      const double* grow = &g[static_cast<size_t>(i) * n];
      double* garow = &ga[static_cast<size_t>(i) * k];
      for (int kk = 0; kk < k; ++kk) {
        const double* brow = &vb[static_cast<size_t>(kk) * n];
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
        garow[kk] += s;
      }
    }
    // dB = A^T * G, rows of B independent.
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int kk = 0; kk < k; ++kk) {
      double* gbrow = &gb[static_cast<size_t>(kk) * n];
      for (int i = 0; i < m; ++i) {
        double av = va[static_cast<size_t>(i) * k + kk];
        const double* grow = &g[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
      }
    }
  };
  return id;
}

VarId Tape::matvec(VarId w, VarId x) {
  const Tensor& tw = val(w);
  const Tensor& tx = val(x);
  if (tw.shape.size() != 2 || tx.shape.size() != 1 || tw.shape[1] != tx.shape[0])
    fail(ErrorCode::ShapeMismatch, "matvec: incompatible shapes");
  const int m = tw.shape[0], n = tw.shape[1];
  Tensor out = Tensor::zeros({m});
  const int nt = threads_for(static_cast<int64_t>(m) * n);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int i = 0; i < m; ++i) {
    const double* wrow = &tw.data[static_cast<size_t>(i) * n];
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += wrow[j] * tx.data[j];
    out.data[i] = s;
  }
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [w, x, id, m, n](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& vw = t.val(w).data;
    const auto& vx = t.val(x).data;
    auto& gw = t.grad(w).data;
    auto& gx = t.grad(x).data;
    // Partitioned over columns: both gw and gx writes stay disjoint.
    const int nt = threads_for(static_cast<int64_t>(m) * n);
#pragma omp parallel num_threads(nt) if (nt > 1)
    {
#ifdef _OPENMP
      int tid = omp_get_thread_num(), tcount = omp_get_num_threads();
#else
      int tid = 0, tcount = 1;
#endif
      int j0 = static_cast<int>(static_cast<int64_t>(n) * tid / tcount);
      int j1 = static_cast<int>(static_cast<int64_t>(n) * (tid + 1) / tcount);
      for (int i = 0; i < m; ++i) {
        double gi = g[i];
        if (gi == 0.0) continue;
        const double* wrow = &vw[static_cast<size_t>(i) * n];
        double* gwrow = &gw[static_cast<size_t>(i) * n];
        for (int j = j0; j < j1; ++j) {
          gwrow[j] += gi * vx[j];
          gx[j] += gi * wrow[j];
        }
      }
    }
  };
  return id;
}

VarId Tape::mean_rows(VarId a) {
  const Tensor& ta = val(a);
  if (ta.shape.size() != 2)
    fail(ErrorCode::ShapeMismatch, "mean_rows: expects a matrix");
  const int n = ta.shape[0], c = ta.shape[1];
  Tensor out = Tensor::zeros({c});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.data[j] += ta.at(i, j);
  for (auto& v : out.data) v /= n;
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, id, n, c](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        ga[static_cast<size_t>(i) * c + j] += g[j] / n;
  };
  return id;
}

namespace {
void check_rows(const Tensor& a, const Tensor& v, const char* op) {
  if (a.shape.size() != 2 || v.shape.size() != 1 || a.shape[1] != v.shape[0])
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": incompatible shapes");
}
}  // namespace

VarId Tape::add_rows(VarId a, VarId v) {
  check_rows(val(a), val(v), "add_rows");
  const int n = val(a).shape[0], c = val(a).shape[1];
  Tensor out = val(a);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) += val(v).data[j];
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, v, id, n, c](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    auto& gv = t.grad(v).data;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        double gij = g[static_cast<size_t>(i) * c + j];
        ga[static_cast<size_t>(i) * c + j] += gij;
        gv[j] += gij;
      }
  };
  return id;
}

VarId Tape::sub_rows(VarId a, VarId v) {
  check_rows(val(a), val(v), "sub_rows");
  const int n = val(a).shape[0], c = val(a).shape[1];
  Tensor out = val(a);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) -= val(v).data[j];
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, v, id, n, c](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    auto& gv = t.grad(v).data;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        double gij = g[static_cast<size_t>(i) * c + j];
        ga[static_cast<size_t>(i) * c + j] += gij;
        gv[j] -= gij;
      }
  };
  return id;
}

VarId Tape::mul_rows(VarId a, VarId v) {
  check_rows(val(a), val(v), "mul_rows");
  const int n = val(a).shape[0], c = val(a).shape[1];
  Tensor out = val(a);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) *= val(v).data[j];
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, v, id, n, c](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& va = t.val(a).data;
    const auto& vv = t.val(v).data;
    auto& ga = t.grad(a).data;
    auto& gv = t.grad(v).data;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        size_t idx = static_cast<size_t>(i) * c + j;
        ga[idx] += g[idx] * vv[j];
        gv[j] += g[idx] * va[idx];
      }
  };
  return id;
}

VarId Tape::div_rows(VarId a, VarId v) {
  check_rows(val(a), val(v), "div_rows");
  const int n = val(a).shape[0], c = val(a).shape[1];
  Tensor out = val(a);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) /= val(v).data[j];
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, v, id, n, c](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& y = t.val(id).data;  // y = a / v
    const auto& vv = t.val(v).data;
    auto& ga = t.grad(a).data;
    auto& gv = t.grad(v).data;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        size_t idx = static_cast<size_t>(i) * c + j;
        ga[idx] += g[idx] / vv[j];
        gv[j] -= g[idx] * y[idx] / vv[j];
      }
  };
  return id;
}

VarId Tape::reshape(VarId a, std::vector<int> shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  if (n != val(a).numel())
    fail(ErrorCode::ShapeMismatch, "reshape: element count mismatch");
  Tensor out(std::move(shape), val(a).data);
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return id;
}

VarId Tape::concat(const std::vector<VarId>& parts) {
  int64_t total = 0;
  for (VarId p : parts) total += val(p).numel();
  Tensor out = Tensor::zeros({static_cast<int>(total)});
  int64_t off = 0;
  for (VarId p : parts) {
    const auto& d = val(p).data;
    std::copy(d.begin(), d.end(), out.data.begin() + off);
    off += d.size();
  }
  VarId id = push(std::move(out), nullptr);
  std::vector<VarId> ps = parts;
  nodes_[id].pull = [ps, id](Tape& t) {
    const auto& g = t.grad(id).data;
    size_t off = 0;
    for (VarId p : ps) {
      auto& gp = t.grad(p).data;
      for (size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      off += gp.size();
    }
  };
  return id;
}

VarId Tape::element(VarId a, int index) {
  VarId id = push(Tensor::scalar(val(a).data.at(index)), nullptr);
  nodes_[id].pull = [a, index, id](Tape& t) {
    t.grad(a).data[index] += t.grad(id).data[0];
  };
  return id;
}

VarId Tape::scale_by(VarId a, VarId s) {
  if (val(s).numel() != 1)
    fail(ErrorCode::ShapeMismatch, "scale_by: scale must be scalar");
  Tensor out = val(a);
  double sv = val(s).value();
  for (auto& v : out.data) v *= sv;
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, s, id](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& va = t.val(a).data;
    double sv = t.val(s).value();
    auto& ga = t.grad(a).data;
    double gs = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * sv;
      gs += g[i] * va[i];
    }
    t.grad(s).data[0] += gs;
  };
  return id;
}

VarId Tape::vmax(VarId a) {
  const auto& d = val(a).data;
  int arg = 0;
  for (size_t i = 1; i < d.size(); ++i)
    if (d[i] > d[arg]) arg = static_cast<int>(i);
  VarId id = push(Tensor::scalar(d[arg]), nullptr);
  nodes_[id].pull = [a, arg, id](Tape& t) {
    t.grad(a).data[arg] += t.grad(id).data[0];
  };
  return id;
}

VarId Tape::div_scalar(VarId a, VarId b) {
  if (val(a).numel() != 1 || val(b).numel() != 1)
    fail(ErrorCode::ShapeMismatch, "div_scalar: expects scalars");
  VarId id = push(Tensor::scalar(val(a).value() / val(b).value()), nullptr);
  nodes_[id].pull = [a, b, id](Tape& t) {
    double g = t.grad(id).data[0];
    double va = t.val(a).value(), vb = t.val(b).value();
    t.grad(a).data[0] += g / vb;
    t.grad(b).data[0] -= g * va / (vb * vb);
  };
  return id;
}

VarId Tape::softmax(VarId a) {
  const auto& x = val(a).data;
  double mx = *std::max_element(x.begin(), x.end());
  Tensor out = val(a);
  double denom = 0.0;
  for (auto& v : out.data) {
    v = std::exp(v - mx);
    denom += v;
  }
  for (auto& v : out.data) v /= denom;
  VarId id = push(std::move(out), nullptr);
  nodes_[id].pull = [a, id](Tape& t) {
    const auto& g = t.grad(id).data;
    const auto& y = t.val(id).data;
    auto& ga = t.grad(a).data;
    double gy = 0.0;
    for (size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
    for (size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - gy);
  };
  return id;
}

VarId Tape::neighbor_mean(VarId a, const std::vector<std::array<int, 2>>& pairs) {
  const Tensor& ta = val(a);
  if (ta.shape.size() != 2 ||
      ta.shape[0] != static_cast<int>(pairs.size()))
    fail(ErrorCode::ShapeMismatch, "neighbor_mean: adjacency/feature mismatch");
  const int e = ta.shape[0], c = ta.shape[1];
  Tensor out = Tensor::zeros({e, c});
  for (int i = 0; i < e; ++i)
    for (int j = 0; j < c; ++j)
      out.at(i, j) = 0.5 * (ta.at(pairs[i][0], j) + ta.at(pairs[i][1], j));
  VarId id = push(std::move(out), nullptr);
  std::vector<std::array<int, 2>> p = pairs;
  nodes_[id].pull = [a, p, id, e, c](Tape& t) {
    const auto& g = t.grad(id).data;
    auto& ga = t.grad(a).data;
    for (int i = 0; i < e; ++i)
      for (int j = 0; j < c; ++j) {
        double gij = 0.5 * g[static_cast<size_t>(i) * c + j];
        ga[static_cast<size_t>(p[i][0]) * c + j] += gij;
        ga[static_cast<size_t>(p[i][1]) * c + j] += gij;
      }
  };
  return id;
}

VarId kl_gaussian(Tape& t, VarId mu, VarId logvar) {
  require_same_shape(t.val(mu), t.val(logvar), "kl_gaussian");
  // 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)
  VarId t1 = t.add(t.mul(mu, mu), t.exp(logvar));
  VarId t2 = t.add_const(logvar, 1.0);
  VarId kl = t.scal(t.sum(t.sub(t1, t2)), 0.5);
  if (!t.val(kl).finite())
    fail(ErrorCode::NonFinite, "kl_gaussian produced a non-finite value");
  return kl;
}

VarId mse_mean(Tape& t, VarId a, VarId b) {
  require_same_shape(t.val(a), t.val(b), "mse_mean");
  VarId d = t.sub(a, b);
  return t.scal(t.sum(t.mul(d, d)), 1.0 / static_cast<double>(t.val(a).numel()));
}

}  // namespace risa::nn
