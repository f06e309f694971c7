#pragma once

#include <cstdint>
#include <vector>

#include "pltts/dsp/audio.hpp"
#include "pltts/dsp/features.hpp"

namespace pltts::dsp {

struct GriffinLimConfig {
  int n_iter = 60;
  std::uint64_t seed = 0;
};

struct GriffinLimResult {
  Waveform wave;
  /// Spectral convergence ||S - |STFT(x_k)||| / ||S|| for the initial
  /// estimate and after each iteration (n_iter + 1 values).
  std::vector<double> convergence;
};

/// Phase reconstruction from a linear magnitude spectrogram
/// (frames × n_fft/2 + 1). Output length is (frames - 1)·hop + win.
GriffinLimResult griffin_lim(const Matrix& magnitude, const MelConfig& cfg = {}, const GriffinLimConfig& gl = {});

/// Log-mel frames back to a non-negative linear magnitude estimate through
/// a ridge-regularized pseudo-inverse of the filterbank.
Matrix mel_to_linear(const Matrix& log_mel, const MelConfig& cfg = {});

GriffinLimResult griffin_lim(const MelSpectrogram& mel, const MelConfig& cfg = {}, const GriffinLimConfig& gl = {});

/// Spectral convergence with one-sided bins weighted to match the full
/// two-sided spectrum.
double spectral_convergence(const Matrix& target, const Matrix& estimate);

}  // namespace pltts::dsp
