#include "pltts/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pltts {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  return f().item();
}

}  // namespace

GradCheckReport gradient_check(const std::function<Tensor()>& f, const TensorList& wrt,
                               const GradCheckOptions& options) {
  const double base_a = evaluate(f);
  const double base_b = evaluate(f);
  if (base_a != base_b)
    throw std::runtime_error("gradient_check: function is not deterministic (" + std::to_string(base_a) +
                             " vs " + std::to_string(base_b) + ")");

  std::vector<bool> previous;
  for (const auto& e : wrt) {
    Tensor t = e.tensor;
    previous.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  tape::reset();
  {
    auto loss = f();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& e : wrt) {
    auto g = e.tensor.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(e.tensor.numel(), 0.0);
  }
  tape::reset();

  GradCheckReport report;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor t = wrt[k].tensor;
    auto values = t.mutable_data();
    const std::size_t n = values.size();
    const std::size_t probes = options.max_coords == 0 ? n : std::min(n, options.max_coords);
    for (std::size_t p = 0; p < probes; ++p) {
      const std::size_t i = probes == n ? p : (p * n) / probes;
      const double saved = values[i];
      values[i] = saved + options.eps;
      const double up = evaluate(f);
      values[i] = saved - options.eps;
      const double down = evaluate(f);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (report.worst_tensor.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = wrt[k].name;
        report.worst_index = i;
      }
    }
  }
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    Tensor t = wrt[k].tensor;
    t.set_requires_grad(previous[k]);
  }
  return report;
}

double finite_difference_check(const std::function<Tensor()>& f, Tensor x, double eps) {
  GradCheckOptions options;
  options.eps = eps;
  return gradient_check(f, {{"x", x}}, options).max_rel_error;
}

}  // namespace pltts
