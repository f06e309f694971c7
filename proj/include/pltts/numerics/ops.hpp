#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "pltts/numerics/tensor.hpp"

namespace pltts {

// Elementwise arithmetic. `b` may be a suffix of `a`'s shape (or a single
// value) and is then repeated across the leading dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean over the first axis of an R×C matrix, giving 1×C.
Tensor mean_rows(const Tensor& a);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& a, Shape shape);
/// 2-D transpose.
Tensor transpose(const Tensor& a);
/// Gathers rows (first-axis slices) by index; indices may repeat.
Tensor permute_rows(const Tensor& a, const std::vector<std::size_t>& order);
/// Scales row r of an R×C matrix by w[r]; w has R elements.
Tensor mul_rows(const Tensor& a, const Tensor& w);

Tensor softmax(const Tensor& a, std::size_t axis);

/// Inverted dropout. Identity when `training` is false or rate is 0.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng, bool training);

/// Mean cross-entropy of B×C logits against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);
/// Mean binary cross-entropy of logits against same-shape targets in [0,1].
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);
/// Mean squared difference of two same-shape tensors.
Tensor mse(const Tensor& a, const Tensor& b);

/// Cross-correlation. Input is N×C×H×W (or C×H×W), kernels K×C×kh×kw,
/// bias K (may be undefined). Output N×K×H'×W' (or K×H'×W').
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride, std::size_t pad_h, std::size_t pad_w);

/// 2×2 max pooling with stride 2 over the last two axes. Odd extents are
/// zero-padded on the right/bottom. Ties go to the first element in
/// row-major order.
Tensor maxpool2d(const Tensor& input);

/// N×K×H×W feature maps to (N·H)×(K·W): one row per time slice.
Tensor flatten_time_slices(const Tensor& input);

/// Batch normalisation over the rows of an R×F matrix using batch
/// statistics. Writes the batch mean and biased variance when given.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        std::vector<double>* batch_mean, std::vector<double>* batch_var);
/// Batch normalisation with fixed statistics.
Tensor batch_norm_inference(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                            const std::vector<double>& mean, const std::vector<double>& var,
                            double eps);

/// LSTM cell halves. `gates` is B×4H pre-activation in (input, forget,
/// cell, output) order.
Tensor lstm_cell_state(const Tensor& gates, const Tensor& c_prev);
Tensor lstm_cell_output(const Tensor& gates, const Tensor& c);

}  // namespace pltts
