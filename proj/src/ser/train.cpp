#include "pltts/ser/train.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "pltts/numerics/adam.hpp"
#include "pltts/numerics/rng.hpp"

namespace pltts::ser {

namespace {

// Normalized delta-stack segments of one utterance as plain data.
Tensor prepare_segments(const SerModel& model, const Matrix& log_mel) {
  NoGradGuard guard;
  return utterance_segments(model, log_mel.to_tensor()).detach();
}

}  // namespace

int predict_emotion(SerModel& model, const Matrix& log_mel) {
  NoGradGuard guard;
  const Tensor segs = prepare_segments(model, log_mel);
  const std::size_t n = segs.dim(0);
  std::vector<Tensor> each;
  for (std::size_t i = 0; i < n; ++i) each.push_back(slice(segs, 0, i, 1));
  const Tensor probs = softmax(ser_forward(model, each, false).logits, 1);
  const std::size_t classes = model.config.classes;
  std::vector<double> mean(classes, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < classes; ++c) mean[c] += probs.at(i, c);
  return static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
}

double utterance_accuracy(SerModel& model, const std::vector<SerExample>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& e : examples) correct += predict_emotion(model, e.log_mel) == e.label;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

SerTrainReport train_ser(SerModel& model, const std::vector<SerExample>& train,
                         const std::vector<SerExample>& holdout, const SerTrainOptions& options) {
  if (train.empty()) throw std::invalid_argument("train_ser: empty training set");
  if (options.batch == 0) throw std::invalid_argument("train_ser: batch must be positive");
  std::vector<Matrix> mels;
  for (const auto& e : train) {
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= model.config.classes)
      throw std::invalid_argument("train_ser: example '" + e.id + "' has label " + std::to_string(e.label) +
                                  " outside the class set");
    mels.push_back(e.log_mel);
  }
  model.feature_stats = dsp::compute_norm_stats(mels);

  std::vector<Tensor> pool;
  std::vector<int> labels;
  for (const auto& e : train) {
    const Tensor segs = prepare_segments(model, e.log_mel);
    for (std::size_t i = 0; i < segs.dim(0); ++i) {
      pool.push_back(slice(segs, 0, i, 1).detach());
      labels.push_back(e.label);
    }
  }

  AdamConfig ac;
  ac.beta1 = options.beta1;
  ac.nesterov = true;
  ac.schedule.base = options.learning_rate;
  ac.schedule.floor = options.learning_rate;
  ac.schedule.decay_start = std::numeric_limits<std::int64_t>::max() / 2;
  ac.schedule.decay_end = std::numeric_limits<std::int64_t>::max();
  model.set_frozen(false);
  Adam adam(model.params(), ac);

  SerTrainReport report;
  report.train_segments = pool.size();
  const std::size_t batch = std::min(options.batch, pool.size());
  std::vector<std::size_t> order(pool.size());
  for (std::int64_t step = 0; step < options.steps; ++step) {
    std::mt19937_64 rng(derive_seed(options.seed, static_cast<std::uint64_t>(step)));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < batch; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    std::vector<Tensor> xs;
    std::vector<int> ys;
    for (std::size_t i = 0; i < batch; ++i) {
      xs.push_back(pool[order[i]]);
      ys.push_back(labels[order[i]]);
    }
    tape::reset();
    adam.zero_grad();
    SerOutput out = ser_forward(model, xs, true);
    Tensor loss = softmax_cross_entropy(out.logits, ys);
    backward(loss);
    adam.step();
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < model.config.classes; ++c)
        if (out.logits.at(b, c) > out.logits.at(b, best)) best = c;
      correct += static_cast<int>(best) == ys[b];
    }
    report.loss_history.push_back(loss.item());
    if (options.on_step) options.on_step(step + 1, loss.item(), static_cast<double>(correct) / batch);
  }
  tape::reset();
  report.steps = options.steps;
  report.final_loss = report.loss_history.empty() ? 0.0 : report.loss_history.back();
  report.train_accuracy = utterance_accuracy(model, train);
  report.holdout_accuracy = utterance_accuracy(model, holdout);
  return report;
}

}  // namespace pltts::ser
