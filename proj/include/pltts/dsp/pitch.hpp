#pragma once

#include <vector>

#include "pltts/dsp/audio.hpp"
#include "pltts/dsp/spectral.hpp"

namespace pltts::dsp {

struct PitchConfig {
  FrameConfig frame;
  double f0_min = 50.0;
  double f0_max = 400.0;
  double voicing_threshold = 0.3;
  double energy_floor = 1e-4;  // frame RMS below this is unvoiced
};

/// Per-frame F0 in Hz on the mel frame grid; 0 marks unvoiced frames.
struct F0Contour {
  std::vector<double> hz;

  std::size_t voiced_count() const;
};

/// Normalized-autocorrelation pitch tracker. The lag search covers
/// [sr/f0_max, sr/f0_min]; the first local peak within 90% of the global
/// maximum is refined by parabolic interpolation.
F0Contour estimate_f0(const Waveform& wave, const PitchConfig& cfg = {});

}  // namespace pltts::dsp
