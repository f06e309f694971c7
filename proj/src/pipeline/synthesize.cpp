#include "pltts/pipeline/synthesize.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "pltts/dsp/vocoder.hpp"
#include "pltts/tts/text.hpp"

namespace pltts::pipeline {

SynthesisOutput synthesize(TtsSystem& system, const std::string& text, const SynthesisOptions& options) {
  const auto ids = tts::encode_text_ids(tts::normalize_text(text));
  const dsp::MelConfig mel_cfg;
  NoGradGuard guard;
  Tensor psi;
  if (system.model.config.mode == tts::Mode::ST) {
    if (!options.reference_wav)
      throw std::invalid_argument("ST synthesis needs a reference utterance (--reference)");
    if (!system.reference_encoder) throw std::runtime_error("ST checkpoint has no reference encoder");
    const auto reference = dsp::mel_spectrogram(dsp::load_wav(*options.reference_wav), mel_cfg);
    psi = ser::style_features(*system.reference_encoder, reference.frames.to_tensor())
              .at(system.model.config.style_level);
  }
  const Tensor memory = tts::build_memory(system.model, ids, psi.defined() ? &psi : nullptr);
  SynthesisOutput out;
  out.result = tts::infer(system.model, memory, options.max_steps, options.seed);
  out.log_mel = dsp::denormalize(out.result.post_mel, system.stats);

  dsp::MelSpectrogram mel;
  mel.frames = out.log_mel;
  dsp::GriffinLimConfig gl;
  gl.n_iter = options.griffin_lim_iters;
  gl.seed = options.seed;
  out.wave = dsp::griffin_lim(mel, mel_cfg, gl).wave;
  out.wave.samples.resize(out.log_mel.rows * mel_cfg.frame.hop);
  return out;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  char buf[32];
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace pltts::pipeline
