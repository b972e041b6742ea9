#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "risa/error.hpp"

namespace risa::nn {

// Dense row-major double tensor. Scalars have shape {1}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<int> s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  double& at(int i) { return data[i]; }
  double at(int i) const { return data[i]; }
  double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

  double value() const { return data.at(0); }  // scalar accessor

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (!a.same_shape(b))
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": operand shapes differ");
}

}  // namespace risa::nn
