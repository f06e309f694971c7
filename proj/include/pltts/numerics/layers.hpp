#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "pltts/numerics/ops.hpp"
#include "pltts/numerics/tensor.hpp"

namespace pltts {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using TensorList = std::vector<NamedTensor>;

/// U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

struct Linear {
  Tensor weight;  // in × out
  Tensor bias;    // out

  static Linear create(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
  void collect(const std::string& prefix, TensorList& out) const;
};

struct Conv2d {
  Tensor kernels;  // K × C × kh × kw
  Tensor bias;     // K
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  /// "Same" padding for odd kernel extents.
  static Conv2d create(std::size_t in_channels, std::size_t out_channels, std::size_t kh, std::size_t kw,
                       std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, kernels, bias, stride, pad_h, pad_w); }
  void collect(const std::string& prefix, TensorList& out) const;
};

/// 1-D convolution along time of an L×C sequence, giving L×K.
Tensor conv1d_sequence(const Tensor& sequence, const Conv2d& conv);

/// Batch norm over rows with running statistics kept as buffers.
struct BatchNorm {
  Tensor gamma, beta;
  Tensor running_mean, running_var;  // buffers, never trained
  double momentum = 0.9;
  double eps = 1e-5;

  static BatchNorm create(std::size_t features);
  Tensor operator()(const Tensor& x, bool training);
  void collect(const std::string& prefix, TensorList& out) const;
  void collect_buffers(const std::string& prefix, TensorList& out) const;
};

struct LstmLayer {
  Tensor w_input;   // d_in × 4H
  Tensor w_hidden;  // H × 4H
  Tensor bias;      // 4H, forget slice initialised to 1
  std::size_t hidden = 0;

  static LstmLayer create(std::size_t in, std::size_t hidden, std::mt19937_64& rng);
  void collect(const std::string& prefix, TensorList& out) const;
};

struct LstmState {
  Tensor h;
  Tensor c;
};

enum class Direction { Forward, Backward };

LstmState lstm_zero_state(std::size_t batch, std::size_t hidden);
/// One step; `x` is B×d_in.
LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmLayer& layer);
/// Runs over a time-major (T·B)×d_in input with zero initial state and
/// returns (T·B)×H with each output at its own time position.
Tensor lstm_sequence(const Tensor& inputs, const LstmLayer& layer, Direction direction,
                     std::size_t batch = 1);
/// Forward and backward passes concatenated per step: (T·B)×2H.
Tensor bilstm_sequence(const Tensor& inputs, const LstmLayer& forward, const LstmLayer& backward,
                       std::size_t batch = 1);

/// Sets requires_grad on every tensor of a parameter list.
void set_trainable(const TensorList& params, bool trainable);
void zero_grads(const TensorList& params);

}  // namespace pltts
