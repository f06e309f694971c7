#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "pltts/dsp/audio.hpp"
#include "pltts/pipeline/tts_train.hpp"
#include "pltts/tts/model.hpp"

namespace pltts::pipeline {

struct SynthesisOptions {
  std::size_t max_steps = 0;  // 0 uses the model config
  std::uint64_t seed = 0;     // Griffin-Lim phase and any inference dropout
  int griffin_lim_iters = 60;
  std::optional<std::filesystem::path> reference_wav;  // required for ST systems
};

struct SynthesisOutput {
  dsp::Waveform wave;      // exactly frames · hop samples
  Matrix log_mel;          // denormalized T̂ × n_mels
  tts::SynthesisResult result;
};

/// Text → infer → denormalize → Griffin-Lim. Throws UnknownCharacterError
/// for text outside the charset.
SynthesisOutput synthesize(TtsSystem& system, const std::string& text, const SynthesisOptions& options);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);

}  // namespace pltts::pipeline
