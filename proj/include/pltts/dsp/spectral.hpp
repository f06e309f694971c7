#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "pltts/dsp/audio.hpp"
#include "pltts/numerics/matrix.hpp"

namespace pltts::dsp {

using Complex = std::complex<double>;

/// Real-input DFT of length in.size(); returns the n/2 + 1 one-sided bins.
std::vector<Complex> rfft(std::span<const double> in);

/// Inverse of `rfft` for a length-n signal (scaled by 1/n). Imaginary parts
/// of the DC and Nyquist bins are ignored.
std::vector<double> irfft(std::span<const Complex> bins, std::size_t n);

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

struct FrameConfig {
  std::size_t win = 800;   // 50 ms at 16 kHz
  std::size_t hop = 200;   // 12.5 ms at 16 kHz
  std::size_t n_fft = 1024;
};

/// Frame count for the unpadded policy: 1 + floor((n - win) / hop).
std::size_t frame_count(std::size_t samples, const FrameConfig& cfg);

/// One-sided complex spectrogram, frames × (n_fft/2 + 1).
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<Complex> values;

  Complex& operator()(std::size_t t, std::size_t k) { return values[t * bins + k]; }
  const Complex& operator()(std::size_t t, std::size_t k) const { return values[t * bins + k]; }
  Matrix magnitude() const;
};

/// Hann-windowed STFT without centring. Throws when the signal is shorter
/// than one window.
Spectrogram stft(std::span<const double> samples, const FrameConfig& cfg);

/// Least-squares inverse of `stft`; output length (frames-1)·hop + win.
std::vector<double> istft(const Spectrogram& spec, const FrameConfig& cfg);

}  // namespace pltts::dsp
