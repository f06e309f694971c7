#include "pltts/numerics/adam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pltts {

double LrSchedule::at(std::int64_t step) const {
  if (step <= decay_start || decay_end <= decay_start) return base;
  const double rate = std::pow(floor / base, 1.0 / static_cast<double>(decay_end - decay_start));
  return std::max(floor, base * std::pow(rate, static_cast<double>(step - decay_start)));
}

Adam::Adam(TensorList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double lr = config_.schedule.at(step_);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c1_next = 1.0 - std::pow(b1, t + 1.0);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor param = params_[k].tensor;
    auto values = param.mutable_data();
    auto grad = param.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      if (config_.weight_decay != 0.0) values[i] -= lr * config_.weight_decay * values[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = config_.nesterov ? b1 * m[i] / c1_next + (1.0 - b1) * g / c1 : m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::zero_grad() { zero_grads(params_); }

TensorList Adam::state() const {
  TensorList out;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    out.push_back({"adam.m." + params_[k].name, Tensor(params_[k].tensor.shape(), m_[k])});
    out.push_back({"adam.v." + params_[k].name, Tensor(params_[k].tensor.shape(), v_[k])});
  }
  out.push_back({"adam.step", Tensor::scalar(static_cast<double>(step_))});
  return out;
}

void Adam::load_state(const TensorList& state) {
  auto find = [&](const std::string& name) -> const Tensor& {
    for (const auto& e : state)
      if (e.name == name) return e.tensor;
    throw std::runtime_error("adam: missing optimizer state '" + name + "'");
  };
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& m = find("adam.m." + params_[k].name);
    const auto& v = find("adam.v." + params_[k].name);
    if (m.numel() != m_[k].size() || v.numel() != v_[k].size())
      throw ShapeError("adam: state for '" + params_[k].name + "' has the wrong size");
    std::copy(m.data().begin(), m.data().end(), m_[k].begin());
    std::copy(v.data().begin(), v.data().end(), v_[k].begin());
  }
  step_ = static_cast<std::int64_t>(find("adam.step").item());
}

}  // namespace pltts
