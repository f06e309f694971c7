#pragma once

#include <cstdint>
#include <vector>

#include "pltts/numerics/layers.hpp"

namespace pltts {

/// Constant learning rate until `decay_start`, then exponential decay that
/// reaches `floor` at `decay_end` and stays there.
struct LrSchedule {
  double base = 1e-3;
  double floor = 1e-5;
  std::int64_t decay_start = 50000;
  std::int64_t decay_end = 150000;

  double at(std::int64_t step) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  bool nesterov = false;      // Nadam-style first moment
  LrSchedule schedule;
};

class Adam {
 public:
  Adam(TensorList params, AdamConfig config);

  /// Applies one update from the parameters' current grads. Parameters
  /// without a grad are treated as having a zero grad.
  void step();
  void zero_grad();

  std::int64_t step_count() const { return step_; }
  double current_lr() const { return config_.schedule.at(step_); }
  const AdamConfig& config() const { return config_; }
  const TensorList& params() const { return params_; }

  /// Moments as "adam.m.<name>", "adam.v.<name>" plus "adam.step".
  TensorList state() const;
  void load_state(const TensorList& state);

 private:
  TensorList params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t step_ = 0;
};

}  // namespace pltts
