#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pltts/dsp/audio.hpp"
#include "pltts/dsp/spectral.hpp"
#include "pltts/numerics/matrix.hpp"

namespace pltts::dsp {

struct MelConfig {
  FrameConfig frame;
  int sample_rate = 16000;
  std::size_t n_mels = 40;
  double f_min = 0.0;
  double f_max = 8000.0;
  double eps = 1e-10;

  friend bool operator==(const MelConfig& a, const MelConfig& b) {
    return a.frame.win == b.frame.win && a.frame.hop == b.frame.hop && a.frame.n_fft == b.frame.n_fft &&
           a.sample_rate == b.sample_rate && a.n_mels == b.n_mels && a.f_min == b.f_min && a.f_max == b.f_max &&
           a.eps == b.eps;
  }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-style filterbank, n_mels × (n_fft/2 + 1). Built once per
/// configuration; repeated calls return the same object.
const Matrix& mel_filterbank(const MelConfig& cfg);

/// Per-channel normalization statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kStdFloor = 1e-8;

  std::size_t channels() const { return mean.size(); }
  std::string to_json() const;
  static NormStats from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static NormStats load(const std::filesystem::path& path);
};

struct MelSpectrogram {
  Matrix frames;  // T × n_mels log-mel energies
  std::optional<NormStats> normalization;

  std::size_t num_frames() const { return frames.rows; }
  std::size_t channels() const { return frames.cols; }
};

/// log(M·|STFT| + eps) on the unpadded frame grid.
MelSpectrogram mel_spectrogram(const Waveform& wave, const MelConfig& cfg = {});

/// Regression-delta operator for T frames: Δ = D·X with window 2 and edge
/// replication. Returned as a T × T matrix.
Matrix delta_operator(std::size_t frames);

struct DeltaStack {
  Matrix statics;
  Matrix delta;
  Matrix delta2;
};

DeltaStack deltas(const Matrix& features);

/// Mean and standard deviation per channel over all frames of the corpus.
NormStats compute_norm_stats(const std::vector<Matrix>& corpus);

/// (x - mean) / max(std, floor) per channel.
MelSpectrogram normalize(const MelSpectrogram& mel, const NormStats& stats);
MelSpectrogram denormalize(const MelSpectrogram& mel, const NormStats& stats);
Matrix normalize(const Matrix& frames, const NormStats& stats);
Matrix denormalize(const Matrix& frames, const NormStats& stats);

}  // namespace pltts::dsp
