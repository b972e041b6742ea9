#pragma once

#include <array>
#include <functional>
#include <vector>

#include "risa/tensor.hpp"

namespace risa::nn {

using VarId = int32_t;
inline constexpr VarId kNoVar = -1;

// Eager reverse-mode tape. Every op computes its value immediately and
// records a pull-back closure; backward() runs the closures in reverse
// creation order, which is a valid reverse topological order.
class Tape {
 public:
  VarId leaf(Tensor value);

  const Tensor& val(VarId id) const { return nodes_[id].value; }
  Tensor& grad(VarId id) { return nodes_[id].grad; }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every node.
  void backward(VarId loss);

  size_t size() const { return nodes_.size(); }

  // ---- elementwise ----
  VarId add(VarId a, VarId b);
  VarId sub(VarId a, VarId b);
  VarId mul(VarId a, VarId b);
  VarId scal(VarId a, double c);        // c * a
  VarId add_const(VarId a, double c);   // a + c
  VarId exp(VarId a);
  VarId sqrt(VarId a);
  VarId leaky_relu(VarId a, double slope);

  // ---- reductions / contractions ----
  VarId sum(VarId a);                        // -> scalar
  VarId dot(VarId a, VarId b);               // vectors -> scalar
  VarId matmul(VarId a, VarId b);            // (m,k)x(k,n) -> (m,n)
  VarId matvec(VarId w, VarId x);            // (m,n)x(n) -> (m)
  VarId mean_rows(VarId a);                  // (n,c) -> (c)

  // ---- broadcasts over rows of an (n,c) matrix ----
  VarId add_rows(VarId a, VarId v);
  VarId sub_rows(VarId a, VarId v);
  VarId mul_rows(VarId a, VarId v);
  VarId div_rows(VarId a, VarId v);

  // ---- structure ----
  VarId reshape(VarId a, std::vector<int> shape);
  VarId concat(const std::vector<VarId>& parts);  // 1-d concat
  VarId element(VarId a, int index);              // -> scalar
  VarId scale_by(VarId a, VarId s);               // tensor * scalar var
  VarId vmax(VarId a);                            // max element -> scalar
  VarId div_scalar(VarId a, VarId b);             // scalar / scalar
  VarId softmax(VarId a);                         // vector, max-subtracted
  VarId neighbor_mean(VarId a, const std::vector<std::array<int, 2>>& pairs);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> pull;  // empty for leaves
  };

  VarId push(Tensor value, std::function<void(Tape&)> pull);

  std::vector<Node> nodes_;
};

// Closed-form KL(N(mu, diag exp(logvar)) || N(0, I)).
VarId kl_gaussian(Tape& t, VarId mu, VarId logvar);

// Mean squared error over all entries.
VarId mse_mean(Tape& t, VarId a, VarId b);

}  // namespace risa::nn
