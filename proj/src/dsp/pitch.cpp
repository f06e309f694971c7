#include "pltts/dsp/pitch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pltts::dsp {

std::size_t F0Contour::voiced_count() const {
  return static_cast<std::size_t>(std::count_if(hz.begin(), hz.end(), [](double f) { return f > 0.0; }));
}

namespace {

double frame_f0(const double* x, std::size_t n, std::size_t lag_lo, std::size_t lag_hi, double sr,
                const PitchConfig& cfg) {
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) energy += x[i] * x[i];
  if (std::sqrt(energy / static_cast<double>(n)) < cfg.energy_floor) return 0.0;

  // r[k] for lags lag_lo-1 .. lag_hi+1 so interpolation has neighbours.
  const std::size_t first = lag_lo - 1, last = std::min(lag_hi + 1, n - 1);
  std::vector<double> r(last - first + 1, 0.0);
  for (std::size_t lag = first; lag <= last; ++lag) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      xy += x[i] * x[i + lag];
      xx += x[i] * x[i];
      yy += x[i + lag] * x[i + lag];
    }
    const double denom = std::sqrt(xx * yy);
    r[lag - first] = denom > 0.0 ? xy / denom : 0.0;
  }
  auto at = [&](std::size_t lag) { return r[lag - first]; };

  double best = -1.0;
  for (std::size_t lag = lag_lo; lag <= lag_hi && lag <= last; ++lag) best = std::max(best, at(lag));
  if (best < cfg.voicing_threshold) return 0.0;

  std::size_t pick = 0;
  for (std::size_t lag = lag_lo; lag <= lag_hi && lag < last; ++lag) {
    const double v = at(lag);
    if (v >= 0.9 * best && v >= at(lag - 1) && v >= at(lag + 1)) {
      pick = lag;
      break;
    }
  }
  if (pick == 0) return 0.0;

  double period = static_cast<double>(pick);
  const double a = at(pick - 1), b = at(pick), c = at(pick + 1);
  const double curvature = a - 2.0 * b + c;
  if (curvature < 0.0) period += 0.5 * (a - c) / curvature;
  return std::clamp(sr / period, cfg.f0_min, cfg.f0_max);
}

}  // namespace

F0Contour estimate_f0(const Waveform& wave, const PitchConfig& cfg) {
  if (!(cfg.f0_min > 0.0) || !(cfg.f0_max > cfg.f0_min))
    throw std::invalid_argument("estimate_f0: need 0 < f0_min < f0_max");
  const double sr = static_cast<double>(wave.sample_rate);
  const auto lag_lo = static_cast<std::size_t>(std::max(2.0, std::floor(sr / cfg.f0_max)));
  const auto lag_hi = static_cast<std::size_t>(std::ceil(sr / cfg.f0_min));
  if (lag_hi + 2 > cfg.frame.win) throw std::invalid_argument("estimate_f0: window too short for f0_min");
  F0Contour out;
  const std::size_t frames = frame_count(wave.samples.size(), cfg.frame);
  out.hz.resize(frames, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    out.hz[t] = frame_f0(wave.samples.data() + t * cfg.frame.hop, cfg.frame.win, lag_lo, lag_hi, sr, cfg);
  return out;
}

}  // namespace pltts::dsp
