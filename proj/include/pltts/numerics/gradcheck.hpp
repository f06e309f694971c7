#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pltts/numerics/layers.hpp"

namespace pltts {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Denominator floor for the relative error of near-zero derivatives.
  double floor = 1e-6;
  /// Coordinates probed per tensor; 0 checks every coordinate. When
  /// limited, coordinates are spread evenly over the tensor.
  std::size_t max_coords = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

/// Compares reverse-mode grads of a scalar function with central
/// differences over every listed tensor. `f` must rebuild its graph on each
/// call. Throws if two baseline evaluations disagree.
GradCheckReport gradient_check(const std::function<Tensor()>& f, const TensorList& wrt,
                               const GradCheckOptions& options = {});

/// Single-tensor convenience form; returns the max relative error.
double finite_difference_check(const std::function<Tensor()>& f, Tensor x, double eps = 1e-5);

}  // namespace pltts
