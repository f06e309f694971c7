#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pltts/ser/ser.hpp"

namespace pltts::ser {

struct SerExample {
  std::string id;
  Matrix log_mel;  // raw T × n_mels
  int label = 0;
};

struct SerTrainOptions {
  std::int64_t steps = 200;
  std::size_t batch = 40;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  std::uint64_t seed = 0;
  /// Called after every step with (step, loss, batch accuracy).
  std::function<void(std::int64_t, double, double)> on_step;
};

struct SerTrainReport {
  std::int64_t steps = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;    // utterance level
  double holdout_accuracy = 0.0;  // utterance level
  std::size_t train_segments = 0;
  std::vector<double> loss_history;
};

/// Segment-level training: every segment is an example carrying its
/// utterance's label. Normalization stats are computed from `train` and
/// stored in the model.
SerTrainReport train_ser(SerModel& model, const std::vector<SerExample>& train,
                         const std::vector<SerExample>& holdout, const SerTrainOptions& options);

/// Utterance prediction from the mean of its segments' class probabilities.
int predict_emotion(SerModel& model, const Matrix& log_mel);

double utterance_accuracy(SerModel& model, const std::vector<SerExample>& examples);

}  // namespace pltts::ser
