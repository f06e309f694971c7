#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pltts/numerics/tensor.hpp"

namespace pltts {

/// Plain row-major matrix for signal-processing and evaluation code that
/// never enters an autodiff graph.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  bool empty() const { return values.empty(); }

  Tensor to_tensor(bool requires_grad = false) const { return Tensor({rows, cols}, values, requires_grad); }
  static Matrix from_tensor(const Tensor& t) {
    if (t.rank() != 2) throw ShapeError("matrix: expected a 2-D tensor, got " + shape_str(t.shape()));
    Matrix m(t.dim(0), t.dim(1));
    auto d = t.data();
    m.values.assign(d.begin(), d.end());
    return m;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace pltts
