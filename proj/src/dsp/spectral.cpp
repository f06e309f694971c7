#include "pltts/dsp/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pltts::dsp {

namespace {

struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// Planning is not thread-safe in FFTW; execution with the new-array API is.
const Plans& plans_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, Plans> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> real(n);
  std::vector<Complex> bins(n / 2 + 1);
  auto* c = reinterpret_cast<fftw_complex*>(bins.data());
  const int size = static_cast<int>(n);
  Plans p;
  p.forward = fftw_plan_dft_r2c_1d(size, real.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.inverse = fftw_plan_dft_c2r_1d(size, c, real.data(), FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
  if (!p.forward || !p.inverse) throw std::runtime_error("fft: planning failed for size " + std::to_string(n));
  return cache.emplace(n, p).first->second;
}

}  // namespace

std::vector<Complex> rfft(std::span<const double> in) {
  const std::size_t n = in.size();
  if (n == 0) return {};
  std::vector<double> buf(in.begin(), in.end());
  std::vector<Complex> out(n / 2 + 1);
  fftw_execute_dft_r2c(plans_for(n).forward, buf.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> irfft(std::span<const Complex> bins, std::size_t n) {
  if (n == 0) return {};
  if (bins.size() != n / 2 + 1) throw std::invalid_argument("irfft: expected " + std::to_string(n / 2 + 1) + " bins");
  std::vector<Complex> buf(bins.begin(), bins.end());
  std::vector<double> out(n);
  fftw_execute_dft_c2r(plans_for(n).inverse, reinterpret_cast<fftw_complex*>(buf.data()), out.data());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv_n;
  return out;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

std::size_t frame_count(std::size_t samples, const FrameConfig& cfg) {
  if (samples < cfg.win) return 0;
  return 1 + (samples - cfg.win) / cfg.hop;
}

Matrix Spectrogram::magnitude() const {
  Matrix m(frames, bins);
  for (std::size_t i = 0; i < values.size(); ++i) m.values[i] = std::abs(values[i]);
  return m;
}

Spectrogram stft(std::span<const double> samples, const FrameConfig& cfg) {
  if (cfg.n_fft < cfg.win) throw std::invalid_argument("stft: n_fft must be at least the window length");
  if (cfg.hop == 0) throw std::invalid_argument("stft: hop must be positive");
  const std::size_t frames = frame_count(samples.size(), cfg);
  if (frames == 0)
    throw std::invalid_argument("stft: waveform of " + std::to_string(samples.size()) +
                                " samples is shorter than one window (" + std::to_string(cfg.win) + ")");
  const auto window = hann_window(cfg.win);
  const auto& plan = plans_for(cfg.n_fft);
  Spectrogram spec;
  spec.frames = frames;
  spec.bins = cfg.n_fft / 2 + 1;
  spec.values.resize(frames * spec.bins);
  std::vector<double> buf(cfg.n_fft, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = samples.data() + t * cfg.hop;
    for (std::size_t i = 0; i < cfg.win; ++i) buf[i] = src[i] * window[i];
    fftw_execute_dft_r2c(plan.forward, buf.data(),
                         reinterpret_cast<fftw_complex*>(spec.values.data() + t * spec.bins));
  }
  return spec;
}

std::vector<double> istft(const Spectrogram& spec, const FrameConfig& cfg) {
  if (spec.frames == 0) return {};
  if (spec.bins != cfg.n_fft / 2 + 1) throw std::invalid_argument("istft: bin count does not match n_fft");
  const auto window = hann_window(cfg.win);
  const auto& plan = plans_for(cfg.n_fft);
  const std::size_t length = (spec.frames - 1) * cfg.hop + cfg.win;
  std::vector<double> out(length, 0.0), norm(length, 0.0);
  std::vector<Complex> bins(spec.bins);
  std::vector<double> frame(cfg.n_fft);
  const double inv_n = 1.0 / static_cast<double>(cfg.n_fft);
  for (std::size_t t = 0; t < spec.frames; ++t) {
    std::copy_n(spec.values.begin() + t * spec.bins, spec.bins, bins.begin());
    fftw_execute_dft_c2r(plan.inverse, reinterpret_cast<fftw_complex*>(bins.data()), frame.data());
    for (std::size_t i = 0; i < cfg.win; ++i) {
      out[t * cfg.hop + i] += window[i] * frame[i] * inv_n;
      norm[t * cfg.hop + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < length; ++i) out[i] = norm[i] > 1e-12 ? out[i] / norm[i] : 0.0;
  return out;
}

}  // namespace pltts::dsp
