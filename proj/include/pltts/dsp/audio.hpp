#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace pltts::dsp {

struct Waveform {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Reads a RIFF/WAVE file holding mono 16-bit PCM. Unknown chunks are
/// skipped. Samples are scaled by 1/32768.
Waveform load_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM. Samples are scaled by 32768, rounded and clipped
/// to the int16 range. A non-empty `comment` is stored in a LIST/INFO ICMT
/// chunk.
void save_wav(const Waveform& wave, const std::filesystem::path& path, const std::string& comment = {});

}  // namespace pltts::dsp
