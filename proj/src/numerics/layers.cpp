#include "pltts/numerics/layers.hpp"

#include <cmath>

namespace pltts {

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0) * a;
  return Tensor(std::move(shape), std::move(values), true);
}

Linear Linear::create(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {glorot_uniform({in, out}, in, out, rng), Tensor::zeros({out}, true)};
}

void Linear::collect(const std::string& prefix, TensorList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Conv2d Conv2d::create(std::size_t in_channels, std::size_t out_channels, std::size_t kh, std::size_t kw,
                      std::mt19937_64& rng) {
  Conv2d conv;
  conv.kernels = glorot_uniform({out_channels, in_channels, kh, kw}, in_channels * kh * kw,
                                out_channels * kh * kw, rng);
  conv.bias = Tensor::zeros({out_channels}, true);
  conv.pad_h = kh / 2;
  conv.pad_w = kw / 2;
  return conv;
}

void Conv2d::collect(const std::string& prefix, TensorList& out) const {
  out.push_back({prefix + ".kernels", kernels});
  out.push_back({prefix + ".bias", bias});
}

Tensor conv1d_sequence(const Tensor& sequence, const Conv2d& conv) {
  const std::size_t len = sequence.dim(0), channels = sequence.dim(1);
  auto planes = reshape(transpose(sequence), {channels, 1, len});
  auto out = conv(planes);
  return transpose(reshape(out, {out.dim(0), out.dim(2)}));
}

BatchNorm BatchNorm::create(std::size_t features) {
  BatchNorm bn;
  bn.gamma = Tensor::full({features}, 1.0, true);
  bn.beta = Tensor::zeros({features}, true);
  bn.running_mean = Tensor::zeros({features});
  bn.running_var = Tensor::full({features}, 1.0);
  return bn;
}

Tensor BatchNorm::operator()(const Tensor& x, bool training) {
  auto rm = running_mean.data();
  auto rv = running_var.data();
  if (!training) {
    return batch_norm_inference(x, gamma, beta, {rm.begin(), rm.end()}, {rv.begin(), rv.end()}, eps);
  }
  std::vector<double> mu, var;
  auto y = batch_norm_train(x, gamma, beta, eps, &mu, &var);
  auto m = running_mean.mutable_data();
  auto v = running_var.mutable_data();
  for (std::size_t j = 0; j < m.size(); ++j) {
    m[j] = momentum * m[j] + (1.0 - momentum) * mu[j];
    v[j] = momentum * v[j] + (1.0 - momentum) * var[j];
  }
  return y;
}

void BatchNorm::collect(const std::string& prefix, TensorList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void BatchNorm::collect_buffers(const std::string& prefix, TensorList& out) const {
  out.push_back({prefix + ".running_mean", running_mean});
  out.push_back({prefix + ".running_var", running_var});
}

LstmLayer LstmLayer::create(std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
  LstmLayer layer;
  layer.hidden = hidden;
  layer.w_input = glorot_uniform({in, 4 * hidden}, in, 4 * hidden, rng);
  layer.w_hidden = glorot_uniform({hidden, 4 * hidden}, hidden, 4 * hidden, rng);
  std::vector<double> b(4 * hidden, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
  layer.bias = Tensor({4 * hidden}, std::move(b), true);
  return layer;
}

void LstmLayer::collect(const std::string& prefix, TensorList& out) const {
  out.push_back({prefix + ".w_input", w_input});
  out.push_back({prefix + ".w_hidden", w_hidden});
  out.push_back({prefix + ".bias", bias});
}

LstmState lstm_zero_state(std::size_t batch, std::size_t hidden) {
  return {Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden})};
}

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const LstmLayer& layer) {
  auto gates = add(add(matmul(x, layer.w_input), matmul(prev.h, layer.w_hidden)), layer.bias);
  auto c = lstm_cell_state(gates, prev.c);
  return {lstm_cell_output(gates, c), c};
}

Tensor lstm_sequence(const Tensor& inputs, const LstmLayer& layer, Direction direction, std::size_t batch) {
  if (inputs.rank() != 2 || inputs.dim(0) % batch != 0)
    throw ShapeError("lstm_sequence: inputs " + shape_str(inputs.shape()) + " are not time-major for batch " +
                     std::to_string(batch));
  const std::size_t steps = inputs.dim(0) / batch;
  // Input projections for every step at once.
  auto projected = add(matmul(inputs, layer.w_input), layer.bias);
  std::vector<Tensor> outputs(steps);
  LstmState state = lstm_zero_state(batch, layer.hidden);
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = direction == Direction::Forward ? i : steps - 1 - i;
    auto gates = add(slice(projected, 0, t * batch, batch), matmul(state.h, layer.w_hidden));
    auto c = lstm_cell_state(gates, state.c);
    state = {lstm_cell_output(gates, c), c};
    outputs[t] = state.h;
  }
  return steps == 1 ? outputs[0] : concat(outputs, 0);
}

Tensor bilstm_sequence(const Tensor& inputs, const LstmLayer& forward, const LstmLayer& backward,
                       std::size_t batch) {
  return concat({lstm_sequence(inputs, forward, Direction::Forward, batch),
                 lstm_sequence(inputs, backward, Direction::Backward, batch)},
                1);
}

void set_trainable(const TensorList& params, bool trainable) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(trainable);
    if (!trainable) t.zero_grad();
  }
}

void zero_grads(const TensorList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace pltts
